"""Adaptive consecutive frame sampling and training-time augmentation.

Sampling policy, for a T-frame budget:
  * short  (frame_count < T): indices 0..frame_count-1 repeated cyclically,
  * medium (T <= frame_count < 4T): two consecutive segments of ceil(T/2) and
    floor(T/2) frames anchored at the start and the end,
  * long   (frame_count >= 4T): three consecutive segments with sizes in
    6:5:5 proportion (largest-remainder rounding) anchored at the start,
    the center, and the end.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .ingest import FrameBatch

LONG_FACTOR = 4
LONG_PROPORTIONS = (6, 5, 5)

_LUMA = (0.299, 0.587, 0.114)


@dataclass
class IndexPlan:
    indices: list[int]
    regime: str


def _proportional_sizes(total: int, weights: tuple[int, ...]) -> list[int]:
    denom = sum(weights)
    quotas = [total * w / denom for w in weights]
    sizes = [int(np.floor(q)) for q in quotas]
    order = sorted(range(len(weights)), key=lambda i: (quotas[i] - sizes[i], -i), reverse=True)
    for i in order[: total - sum(sizes)]:
        sizes[i] += 1
    return sizes


def plan_indices(frame_count: int, t: int) -> IndexPlan:
    if frame_count < 1 or t < 1:
        raise ValueError("frame_count and t must be positive")
    if frame_count < t:
        return IndexPlan([i % frame_count for i in range(t)], "short")
    if frame_count < LONG_FACTOR * t:
        first = (t + 1) // 2
        last = t - first
        indices = list(range(first)) + list(range(frame_count - last, frame_count))
        return IndexPlan(indices, "medium")
    sizes = _proportional_sizes(t, LONG_PROPORTIONS)
    starts = [0, (frame_count - sizes[1]) // 2, frame_count - sizes[2]]
    indices: list[int] = []
    for start, size in zip(starts, sizes):
        indices.extend(range(start, start + size))
    return IndexPlan(indices, "long")


@dataclass
class AugmentConfig:
    enabled: bool = True
    crop_scale: tuple[float, float] = (0.8, 1.0)
    flip_prob: float = 0.5
    brightness: float = 0.2
    contrast: float = 0.2
    saturation: float = 0.1
    hue: float = 0.1
    rng_seed: int = 0

    def validate(self) -> None:
        lo, hi = self.crop_scale
        if not (0.0 < lo <= hi <= 1.0):
            raise ValueError("crop_scale must be a sub-interval of (0, 1]")
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ValueError("flip_prob must be in [0, 1]")
        for name in ("brightness", "contrast", "saturation", "hue"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} amplitude must be non-negative")


def _luma(pixels: torch.Tensor) -> torch.Tensor:
    w = torch.tensor(_LUMA, dtype=pixels.dtype)
    return (pixels * w).sum(dim=-1, keepdim=True)


def _hue_matrix(angle: float) -> torch.Tensor:
    # rotate the chroma plane of the YIQ transform; luma is preserved
    yiq = np.array(
        [[0.299, 0.587, 0.114], [0.5959, -0.2746, -0.3213], [0.2115, -0.5227, 0.3112]]
    )
    c, s = np.cos(angle), np.sin(angle)
    rot = np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])
    return torch.from_numpy(np.linalg.inv(yiq) @ rot @ yiq).to(torch.float32)


def augment(batch: FrameBatch, cfg: AugmentConfig, rng: np.random.Generator) -> FrameBatch:
    """Training-time augmentation; one parameter draw per video so all T
    frames get the same spatial transform (temporal coherence)."""
    if not cfg.enabled:
        return batch
    cfg.validate()
    t, h, w, _ = batch.pixels.shape

    scale = float(rng.uniform(*cfg.crop_scale))
    side = max(1, int(round(h * np.sqrt(scale))))
    top = int(rng.integers(0, h - side + 1))
    left = int(rng.integers(0, w - side + 1))
    flip = bool(rng.random() < cfg.flip_prob)
    b_f = float(rng.uniform(max(0.0, 1 - cfg.brightness), 1 + cfg.brightness))
    c_f = float(rng.uniform(max(0.0, 1 - cfg.contrast), 1 + cfg.contrast))
    s_f = float(rng.uniform(max(0.0, 1 - cfg.saturation), 1 + cfg.saturation))
    hue_shift = float(rng.uniform(-cfg.hue, cfg.hue))

    pixels = batch.pixels
    if side != h or top != 0 or left != 0:
        crop = pixels[:, top : top + side, left : left + side, :]
        crop = crop.permute(0, 3, 1, 2)
        crop = F.interpolate(crop, size=(h, w), mode="bilinear", align_corners=False)
        pixels = crop.permute(0, 2, 3, 1)
    if flip:
        pixels = torch.flip(pixels, dims=[2])
    if cfg.brightness > 0:
        pixels = pixels * b_f
    if cfg.contrast > 0:
        mean = _luma(pixels).mean()
        pixels = mean + c_f * (pixels - mean)
    if cfg.saturation > 0:
        luma = _luma(pixels)
        pixels = luma + s_f * (pixels - luma)
    if cfg.hue > 0 and hue_shift != 0.0:
        m = _hue_matrix(hue_shift * 2 * np.pi)
        pixels = pixels @ m.T
    pixels = pixels.clamp(0.0, 1.0)
    return FrameBatch(pixels=pixels, indices=list(batch.indices), video_id=batch.video_id)
