"""Robustness and adversarial sweep drivers.

Both sweeps evaluate the standard inference pipeline with exactly one
intervention inserted (a perturbation between decode and extraction, or an
attack on the pixels) and report accuracy per subset alongside an
unperturbed baseline. Unavailable conditions (e.g. compression without an
encoder binary) are marked, never dropped or faked.
"""

from __future__ import annotations

import shutil
from dataclasses import dataclass, field

import numpy as np
import torch

from . import kvtext
from .attacks import AttackSpec, pixel_loss_fn, run_attack
from .backbones import FeatureBackend, ModalityFeatures
from .fusion import DetectorModel
from .ingest import LABELS, FrameBatch, VideoManifest
from .metrics import UNTAGGED
from .perturb import EncoderUnavailable, PerturbationSpec, compress, perturb
from .pipeline import batch_for_entry, predict_features
from .training import Checkpoint

# paper-parity sweep grid: compression CRFs, noise sigmas and flip
# probabilities, blur parameters, then the photometric conditions
DEFAULT_GRID: tuple[tuple[str, float], ...] = (
    ("compress_crf", 18), ("compress_crf", 28), ("compress_crf", 32),
    ("gauss_noise", 0.03), ("gauss_noise", 0.1),
    ("salt_pepper", 0.01), ("salt_pepper", 0.05),
    ("gauss_blur", 1.0), ("gauss_blur", 2.0),
    ("defocus_blur", 3), ("defocus_blur", 7),
    ("motion_blur", 7), ("motion_blur", 21),
    ("brightness", 0.05), ("brightness", 0.1),
    ("contrast", 0.7), ("contrast", 1.3),
    ("saturation", 0.7), ("saturation", 1.3),
    ("hue", 5.0), ("hue", 12.0),
)

DEFAULT_EPSILONS = (2.0 / 255.0, 4.0 / 255.0, 8.0 / 255.0)


def default_perturbation_grid(rng_seed: int = 0) -> list[PerturbationSpec]:
    return [PerturbationSpec(kind, float(m), rng_seed) for kind, m in DEFAULT_GRID]


def _subset_masks(manifest: VideoManifest) -> dict[str, np.ndarray]:
    labels = np.array([e.label for e in manifest.entries])
    tags = np.array([(e.generator or UNTAGGED) for e in manifest.entries])
    masks = {"all": np.ones(len(manifest), dtype=bool)}
    for tag in sorted({t for t, l in zip(tags, labels) if l == "fake"}):
        masks[tag] = (labels == "real") | ((labels == "fake") & (tags == tag))
    return masks


@dataclass
class RobustnessReport:
    rows: list[dict] = field(default_factory=list)
    checkpoint_hash: str = ""
    backend_fingerprint: str = ""

    COLUMNS = ("subset", "kind", "magnitude", "accuracy", "n", "available")

    def to_text(self) -> str:
        lines = [
            f"meta.backend_fingerprint={self.backend_fingerprint}",
            f"meta.checkpoint_hash={self.checkpoint_hash}",
            "\t".join(self.COLUMNS),
        ]
        for r in self.rows:
            acc = "na" if r["accuracy"] is None else repr(r["accuracy"])
            lines.append(
                f"{r['subset']}\t{r['kind']}\t{r['magnitude']!r}\t{acc}"
                f"\t{r['n']}\t{'true' if r['available'] else 'false'}"
            )
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RobustnessReport":
        lines = text.splitlines()
        report = cls(
            backend_fingerprint=lines[0].split("=", 1)[1],
            checkpoint_hash=lines[1].split("=", 1)[1],
        )
        for line in lines[3:]:
            subset, kind, magnitude, acc, n, avail = line.split("\t")
            report.rows.append(
                {
                    "subset": subset,
                    "kind": kind,
                    "magnitude": float(magnitude),
                    "accuracy": None if acc == "na" else float(acc),
                    "n": int(n),
                    "available": avail == "true",
                }
            )
        return report

    def accuracy(self, subset: str, kind: str, magnitude: float) -> float | None:
        for r in self.rows:
            if (
                r["subset"] == subset
                and r["kind"] == kind
                and abs(r["magnitude"] - magnitude) < 1e-12
            ):
                return r["accuracy"]
        raise KeyError(f"no row for ({subset}, {kind}, {magnitude})")


def _predict_manifest(
    model: DetectorModel,
    manifest: VideoManifest,
    backend: FeatureBackend,
    t: int,
    spec: PerturbationSpec | None,
) -> np.ndarray:
    features: list[ModalityFeatures] = []
    for entry in manifest.entries:
        batch = batch_for_entry(entry, t)
        if spec is not None:
            batch = perturb(batch, spec)
        with torch.no_grad():
            features.append(backend.extract(batch))
    return predict_features(model, features)


def robustness_sweep(
    checkpoint: Checkpoint,
    manifest: VideoManifest,
    specs: list[PerturbationSpec],
    backend: FeatureBackend,
    encoder: str = "ffmpeg",
    checkpoint_hash: str = "",
) -> RobustnessReport:
    model = checkpoint.build()
    t = checkpoint.model_cfg.t
    masks = _subset_masks(manifest)
    labels = np.array([e.y for e in manifest.entries])
    report = RobustnessReport(
        checkpoint_hash=checkpoint_hash,
        backend_fingerprint=backend.fingerprint.hex(),
    )

    def add_rows(kind: str, magnitude: float, p: np.ndarray | None, available: bool):
        for subset, mask in masks.items():
            if p is None or int(mask.sum()) == 0:
                acc = None
            else:
                preds = (p[mask] >= 0.5).astype(int)
                acc = float(np.mean(preds == labels[mask]))
            report.rows.append(
                {
                    "subset": subset,
                    "kind": kind,
                    "magnitude": float(magnitude),
                    "accuracy": acc,
                    "n": int(mask.sum()),
                    "available": available and p is not None,
                }
            )

    baseline = _predict_manifest(model, manifest, backend, t, None)
    add_rows("base", 0.0, baseline, True)

    for spec in specs:
        spec.validate()
        if spec.kind == "compress_crf":
            p = _compressed_predictions(model, manifest, backend, t, spec, encoder)
            add_rows(spec.kind, spec.magnitude, p, p is not None)
            continue
        p = _predict_manifest(model, manifest, backend, t, spec)
        add_rows(spec.kind, spec.magnitude, p, True)
    return report


def _compressed_predictions(
    model, manifest, backend, t, spec, encoder
) -> np.ndarray | None:
    """Accuracy under re-encoding; None (-> unavailable) when the encoder is
    missing or entries have no media file to compress."""
    if shutil.which(encoder) is None:
        return None
    if any(e.is_synthetic for e in manifest.entries):
        return None
    import tempfile

    from .ingest import ManifestEntry
    from .pipeline import batch_for_entry as decode

    features = []
    with tempfile.TemporaryDirectory(prefix="mmvfd_crf_") as tmp:
        for i, entry in enumerate(manifest.entries):
            try:
                out = compress(
                    entry.source, int(spec.magnitude), encoder=encoder,
                    out_path=f"{tmp}/clip{i:06d}.mp4",
                )
            except (EncoderUnavailable, RuntimeError):
                return None
            re_entry = ManifestEntry(
                id=entry.id, label=entry.label, generator=entry.generator,
                source=str(out), frame_count=entry.frame_count,
            )
            with torch.no_grad():
                features.append(backend.extract(decode(re_entry, t)))
    return predict_features(model, features)


@dataclass
class AttackReport:
    rows: list[dict] = field(default_factory=list)
    checkpoint_hash: str = ""
    backend_fingerprint: str = ""
    surface_note: str = ""

    COLUMNS = ("attack", "epsilon", "surface", "accuracy", "n")

    def to_text(self) -> str:
        lines = [
            f"meta.backend_fingerprint={self.backend_fingerprint}",
            f"meta.checkpoint_hash={self.checkpoint_hash}",
            f"meta.surface_note={self.surface_note}",
            "\t".join(self.COLUMNS),
        ]
        for r in self.rows:
            lines.append(
                f"{r['attack']}\t{r['epsilon']!r}\t{r['surface']}"
                f"\t{r['accuracy']!r}\t{r['n']}"
            )
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "AttackReport":
        lines = text.splitlines()
        report = cls(
            backend_fingerprint=lines[0].split("=", 1)[1],
            checkpoint_hash=lines[1].split("=", 1)[1],
            surface_note=lines[2].split("=", 1)[1],
        )
        for line in lines[4:]:
            attack, eps, surface, acc, n = line.split("\t")
            report.rows.append(
                {
                    "attack": attack,
                    "epsilon": float(eps),
                    "surface": surface,
                    "accuracy": float(acc),
                    "n": int(n),
                }
            )
        return report


def attack_sweep(
    checkpoint: Checkpoint,
    manifest: VideoManifest,
    backend: FeatureBackend,
    epsilons: tuple[float, ...] = DEFAULT_EPSILONS,
    kinds: tuple[str, ...] = ("fgsm", "pgd"),
    surfaces: tuple[str, ...] = ("appearance_only", "full_model"),
    checkpoint_hash: str = "",
) -> AttackReport:
    """Accuracy under gradient-sign attacks; pixel surface via the
    differentiable backend."""
    model = checkpoint.build()
    t = checkpoint.model_cfg.t
    labels = [e.y for e in manifest.entries]
    conditions = [(k, e, s) for k in kinds for e in epsilons for s in surfaces]
    correct = {cond: 0 for cond in conditions}
    clean_correct = 0

    for entry, y in zip(manifest.entries, labels):
        batch = batch_for_entry(entry, t)
        with torch.no_grad():
            feats = backend.extract(batch)
            p_clean = float(model.forward_features(feats).p)
        clean_correct += int((p_clean >= 0.5) == bool(y))
        for kind, eps, surface in conditions:
            spec = AttackSpec(kind=kind, epsilon=eps, target=surface)
            loss_fn = pixel_loss_fn(model, backend, batch, y, surface)
            adv = run_attack(loss_fn, batch.pixels, spec)
            adv_batch = FrameBatch(adv, list(batch.indices), batch.video_id)
            with torch.no_grad():
                app = backend.extract_appearance(adv_batch)
                src = adv_batch if surface == "full_model" else batch
                feats_adv = ModalityFeatures.from_tokens(
                    app,
                    backend.extract_depth(src),
                    backend.extract_motion(src),
                    batch.video_id,
                )
                p_adv = float(model.forward_features(feats_adv).p)
            correct[(kind, eps, surface)] += int((p_adv >= 0.5) == bool(y))

    n = len(manifest)
    report = AttackReport(
        checkpoint_hash=checkpoint_hash,
        backend_fingerprint=backend.fingerprint.hex(),
        surface_note="pixel-space attacks through the differentiable backend",
    )
    report.rows.append(
        {"attack": "none", "epsilon": 0.0, "surface": "clean", "accuracy": clean_correct / n, "n": n}
    )
    for kind, eps, surface in conditions:
        report.rows.append(
            {
                "attack": kind,
                "epsilon": eps,
                "surface": surface,
                "accuracy": correct[(kind, eps, surface)] / n,
                "n": n,
            }
        )
    return report
