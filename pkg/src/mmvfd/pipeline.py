"""Glue from manifest entries to features and model outputs."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import torch

from .backbones import FeatureBackend, FeatureCache, ModalityFeatures
from .fusion import DetectorModel, FusionActivations, stack_features
from .ingest import FrameBatch, ManifestEntry, VideoManifest, decode_frames, probe_frame_count
from .sampling import AugmentConfig, augment, plan_indices


def batch_for_entry(entry: ManifestEntry, t: int) -> FrameBatch:
    plan = plan_indices(probe_frame_count(entry), t)
    return decode_frames(entry, plan.indices)


def features_for_entry(
    entry: ManifestEntry,
    backend: FeatureBackend,
    t: int,
    cache: FeatureCache | None = None,
    augment_cfg: AugmentConfig | None = None,
    aug_rng: np.random.Generator | None = None,
) -> ModalityFeatures:
    augmenting = augment_cfg is not None and augment_cfg.enabled
    if cache is not None and not augmenting:
        cached = cache.load(entry.id, t)
        if cached is not None:
            return cached
    batch = batch_for_entry(entry, t)
    if augmenting:
        batch = augment(batch, augment_cfg, aug_rng)
    with torch.no_grad():
        features = backend.extract(batch)
    if cache is not None and not augmenting:
        cache.store(features)
    return features


@dataclass
class ExtractionFailure:
    video_id: str
    error: str


def features_for_manifest(
    manifest: VideoManifest,
    backend: FeatureBackend,
    t: int,
    cache: FeatureCache | None = None,
    workers: int = 1,
    collect_errors: bool = False,
    progress=None,
) -> tuple[list[ModalityFeatures | None], list[ExtractionFailure]]:
    """Extract features in manifest order. With collect_errors=True, failed
    entries yield None plus an ExtractionFailure instead of aborting."""

    failures: list[ExtractionFailure] = []

    def work(entry: ManifestEntry):
        try:
            feats = features_for_entry(entry, backend, t, cache=cache)
            if progress is not None:
                progress(entry, None)
            return feats
        except Exception as exc:
            if not collect_errors:
                raise
            if progress is not None:
                progress(entry, exc)
            failures.append(ExtractionFailure(entry.id, str(exc)))
            return None

    if workers <= 1:
        results = [work(e) for e in manifest.entries]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, manifest.entries))
    return results, failures


def predict_features(
    model: DetectorModel, features: list[ModalityFeatures], batch_size: int = 64
) -> np.ndarray:
    """Eval-mode probabilities of the real class, one per video."""
    model.eval()
    scores = []
    with torch.no_grad():
        for i in range(0, len(features), batch_size):
            acts = model.forward_features(features[i : i + batch_size])
            scores.append(acts.p.numpy())
    return np.concatenate(scores) if scores else np.zeros(0, dtype=np.float32)


def activations_for_features(
    model: DetectorModel, features: list[ModalityFeatures], batch_size: int = 64
) -> list[FusionActivations]:
    model.eval()
    out = []
    with torch.no_grad():
        for i in range(0, len(features), batch_size):
            out.append(model.forward_features(features[i : i + batch_size]))
    return out


def stacked_dataset(
    features: list[ModalityFeatures], labels: list[int], kv_mode: str
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor, torch.Tensor]:
    app, depth, motion = stack_features(features, kv_mode)
    y = torch.tensor(labels, dtype=torch.float32)
    return app, depth, motion, y
