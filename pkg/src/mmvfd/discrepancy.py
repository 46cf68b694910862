"""Cross-modal attention discrepancy (CMAD) scoring and its population
statistics: Welch's two-sample t-test and Cohen's d with pooled SD.

Convention: sample `a` is real, sample `b` is fake, so positive t and d
mean fakes score higher.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
import torch
from scipy.special import stdtr

from . import kvtext
from .backbones import FeatureBackend, FeatureCache
from .fusion import FusionActivations
from .ingest import VideoManifest
from .pipeline import activations_for_features, features_for_manifest
from .training import Checkpoint

NORMAL_APPROX_DF = 1000.0
HIST_BINS = 50


def cmad_scores(act: FusionActivations) -> np.ndarray:
    """Per-video discrepancy: mean squared distance of both cross-attended
    streams from the temporal appearance stream, averaged over 2T terms."""
    t = act.h_app_temp.shape[1]
    d_motion = (act.h_app_motion - act.h_app_temp).pow(2).sum(dim=(1, 2))
    d_depth = (act.h_app_depth - act.h_app_temp).pow(2).sum(dim=(1, 2))
    return ((d_motion + d_depth) / (2 * t)).detach().cpu().numpy()


def cmad_score(act: FusionActivations) -> float:
    if len(act) != 1:
        raise ValueError("cmad_score expects single-video activations; use cmad_scores")
    return float(cmad_scores(act)[0])


def cmad_from_tensors(
    h_app_temp: torch.Tensor, h_app_motion: torch.Tensor, h_app_depth: torch.Tensor
) -> float:
    """Score from raw (T, d) tensors; convenience for diagnostics."""
    if h_app_temp.shape != h_app_motion.shape or h_app_temp.shape != h_app_depth.shape:
        raise ValueError("all three tensors must share the T x d shape")
    t = h_app_temp.shape[0]
    val = (h_app_motion - h_app_temp).pow(2).sum() + (h_app_depth - h_app_temp).pow(2).sum()
    return float(val / (2 * t))


@dataclass
class WelchResult:
    t: float
    df: float
    p_value: float


def _two_sided_p(t: float, df: float) -> float:
    if df > NORMAL_APPROX_DF:
        return math.erfc(abs(t) / math.sqrt(2.0))
    return 2.0 * float(stdtr(df, -abs(t)))


def welch_from_stats(
    mean_a: float, std_a: float, n_a: int, mean_b: float, std_b: float, n_b: int
) -> WelchResult:
    if n_a < 2 or n_b < 2:
        raise ValueError("Welch test needs at least two samples per group")
    va = std_a**2 / n_a
    vb = std_b**2 / n_b
    se2 = va + vb
    if se2 == 0.0:
        raise ValueError("both samples have zero variance")
    t = (mean_b - mean_a) / math.sqrt(se2)
    df = se2**2 / (va**2 / (n_a - 1) + vb**2 / (n_b - 1))
    return WelchResult(t=t, df=df, p_value=_two_sided_p(t, df))


def welch_t(a, b) -> WelchResult:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return welch_from_stats(
        a.mean(), a.std(ddof=1), len(a), b.mean(), b.std(ddof=1), len(b)
    )


def pooled_sd_from_stats(std_a: float, n_a: int, std_b: float, n_b: int) -> float:
    return math.sqrt(
        ((n_a - 1) * std_a**2 + (n_b - 1) * std_b**2) / (n_a + n_b - 2)
    )


def cohens_d_from_stats(
    mean_a: float, std_a: float, n_a: int, mean_b: float, std_b: float, n_b: int
) -> tuple[float, float]:
    if n_a < 2 or n_b < 2:
        raise ValueError("Cohen's d needs at least two samples per group")
    sp = pooled_sd_from_stats(std_a, n_a, std_b, n_b)
    if sp == 0.0:
        raise ValueError("pooled variance is zero")
    return (mean_b - mean_a) / sp, sp


def cohens_d(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    d, _ = cohens_d_from_stats(
        a.mean(), a.std(ddof=1), len(a), b.mean(), b.std(ddof=1), len(b)
    )
    return d


@dataclass
class CmadReport:
    video_ids: list[str] = field(default_factory=list)
    labels: list[str] = field(default_factory=list)
    scores: list[float] = field(default_factory=list)
    available: bool = False
    real_n: int = 0
    fake_n: int = 0
    real_mean: float = 0.0
    real_std: float = 0.0
    fake_mean: float = 0.0
    fake_std: float = 0.0
    t: float = 0.0
    df: float = 0.0
    p_value: float = 1.0
    cohens_d: float = 0.0
    pooled_sd: float = 0.0
    hist_edges: list[float] = field(default_factory=list)
    hist_real: list[float] = field(default_factory=list)
    hist_fake: list[float] = field(default_factory=list)
    checkpoint_hash: str = ""
    backend_fingerprint: str = ""

    def to_text(self) -> str:
        items: dict[str, object] = {
            "cmad.available": self.available,
            "cmad.real_n": self.real_n,
            "cmad.fake_n": self.fake_n,
            "cmad.real_mean": self.real_mean,
            "cmad.real_std": self.real_std,
            "cmad.fake_mean": self.fake_mean,
            "cmad.fake_std": self.fake_std,
            "cmad.t": self.t,
            "cmad.df": self.df,
            "cmad.p_value": self.p_value,
            "cmad.cohens_d": self.cohens_d,
            "cmad.pooled_sd": self.pooled_sd,
            "hist.edges": self.hist_edges,
            "hist.real_density": self.hist_real,
            "hist.fake_density": self.hist_fake,
            "meta.checkpoint_hash": self.checkpoint_hash,
            "meta.backend_fingerprint": self.backend_fingerprint,
        }
        for i, (vid, label, score) in enumerate(
            zip(self.video_ids, self.labels, self.scores)
        ):
            items[f"score.{i:08d}"] = f"{vid}\t{label}\t{score!r}"
        return kvtext.render_items(items)

    @classmethod
    def from_text(cls, text: str) -> "CmadReport":
        items = kvtext.parse_items(text)

        def floats(key):
            raw = items[key]
            return [float(x) for x in raw.split(",")] if raw else []

        report = cls(
            available=items["cmad.available"] == "true",
            real_n=int(items["cmad.real_n"]),
            fake_n=int(items["cmad.fake_n"]),
            real_mean=float(items["cmad.real_mean"]),
            real_std=float(items["cmad.real_std"]),
            fake_mean=float(items["cmad.fake_mean"]),
            fake_std=float(items["cmad.fake_std"]),
            t=float(items["cmad.t"]),
            df=float(items["cmad.df"]),
            p_value=float(items["cmad.p_value"]),
            cohens_d=float(items["cmad.cohens_d"]),
            pooled_sd=float(items["cmad.pooled_sd"]),
            hist_edges=floats("hist.edges"),
            hist_real=floats("hist.real_density"),
            hist_fake=floats("hist.fake_density"),
            checkpoint_hash=items["meta.checkpoint_hash"],
            backend_fingerprint=items["meta.backend_fingerprint"],
        )
        for key in sorted(k for k in items if k.startswith("score.")):
            vid, label, score = items[key].split("\t")
            report.video_ids.append(vid)
            report.labels.append(label)
            report.scores.append(float(score))
        return report

    def scores_text(self) -> str:
        """Two-column (label, score) file for external plotting."""
        lines = ["label\tscore"]
        lines += [f"{lbl}\t{s!r}" for lbl, s in zip(self.labels, self.scores)]
        return "\n".join(lines) + "\n"


def _histogram(
    real: np.ndarray, fake: np.ndarray, bins: int = HIST_BINS
) -> tuple[list[float], list[float], list[float]]:
    combined = np.concatenate([real, fake]) if len(real) or len(fake) else np.zeros(1)
    lo, hi = float(combined.min()), float(combined.max())
    if hi <= lo:
        hi = lo + 1e-9
    edges = np.linspace(lo, hi, bins + 1)
    real_d = np.histogram(real, bins=edges, density=True)[0] if len(real) else np.zeros(bins)
    fake_d = np.histogram(fake, bins=edges, density=True)[0] if len(fake) else np.zeros(bins)
    return edges.tolist(), real_d.tolist(), fake_d.tolist()


def analyze(
    manifest: VideoManifest,
    checkpoint: Checkpoint,
    backend: FeatureBackend,
    cache: FeatureCache | None = None,
    checkpoint_hash: str = "",
) -> CmadReport:
    """Score every video and compute the real-vs-fake separation statistics.

    With a single-class manifest the per-video scores are still emitted but
    the test statistics are marked unavailable.
    """
    model = checkpoint.build()
    features, _ = features_for_manifest(manifest, backend, checkpoint.model_cfg.t, cache=cache)
    scores: list[float] = []
    for acts in activations_for_features(model, features):
        scores.extend(cmad_scores(acts).tolist())

    labels = [e.label for e in manifest.entries]
    arr = np.asarray(scores)
    real = arr[[lbl == "real" for lbl in labels]]
    fake = arr[[lbl == "fake" for lbl in labels]]
    report = CmadReport(
        video_ids=[e.id for e in manifest.entries],
        labels=labels,
        scores=scores,
        real_n=len(real),
        fake_n=len(fake),
        checkpoint_hash=checkpoint_hash,
        backend_fingerprint=backend.fingerprint.hex(),
    )
    report.hist_edges, report.hist_real, report.hist_fake = _histogram(real, fake)
    if len(real) >= 2 and len(fake) >= 2:
        welch = welch_t(real, fake)
        d, sp = cohens_d_from_stats(
            real.mean(), real.std(ddof=1), len(real),
            fake.mean(), fake.std(ddof=1), len(fake),
        )
        report.available = True
        report.real_mean = float(real.mean())
        report.real_std = float(real.std(ddof=1))
        report.fake_mean = float(fake.mean())
        report.fake_std = float(fake.std(ddof=1))
        report.t = welch.t
        report.df = welch.df
        report.p_value = welch.p_value
        report.cohens_d = d
        report.pooled_sd = sp
    return report


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
