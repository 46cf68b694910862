"""Deterministic synthetic video source.

Synthetic clips are low-contrast carrier patterns on a mid-gray canvas. A
bank of orthonormal 2D-DCT modes, laid out block-aligned inside the center
224x224 region of the 256x256 canvas, carries per-video latent content:

  * a global scene latent shared by the appearance and depth carriers,
  * smooth per-frame dynamics shared across modalities for real videos,
  * for fake videos, a second set of depth/motion carriers driven by
    independent, temporally incoherent latents (the cross-modal
    contradiction the detector is supposed to find).

Real and fake clips differ only in which latents drive the second carrier
set, so the contradiction strength seen downstream is controlled entirely by
how the extractor mixes the two carrier sets. Rendering is a pure function
of (seed, label, frame index, frame count).
"""

from __future__ import annotations

import hashlib
from functools import lru_cache

import numpy as np

CANVAS = 256
PAYLOAD = 224
MARGIN = (CANVAS - PAYLOAD) // 2
GRID = 16
CELL = PAYLOAD // GRID  # 14 px; PAYLOAD is exactly GRID * CELL

# carrier amplitude per latent unit and the background texture level, both
# on the [0, 1] pixel scale; the amplitude is small enough that additive
# pixel noise of sigma 0.03-0.1 measurably degrades latent recovery
AMPLITUDE = 0.004
PIXEL_NOISE = 0.004

N_GLOBAL = 8   # global scene latent size
N_DYN = 4      # per-frame dynamic latent size
N_MOTION = 4   # motion pattern size (reuses the leading global coords)

# energy boost of the incoherent jitter that replaces smooth dynamics in
# fake clips; temporal chaos rather than subtle drift
JITTER_BOOST = 3.0
PROFILE_RMS = 0.7071067811865476  # rms of a unit sine over full cycles

# mode-bank layout: [appearance global | appearance dyn | depth global |
#                    depth dyn (consistent) | depth dyn (alt) |
#                    motion (consistent) | motion (alt)]
SLICES = {
    "app_global": slice(0, 8),
    "app_dyn": slice(8, 12),
    "depth_global": slice(12, 20),
    "depth_dyn": slice(20, 24),
    "depth_dyn_alt": slice(24, 28),
    "motion": slice(28, 32),
    "motion_alt": slice(32, 36),
}
N_MODES = 36


def stable_seed(*parts) -> int:
    """64-bit seed derived from a stable hash of the parts."""
    text = ":".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def stable_rng(*parts) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(stable_seed(*parts)))


def _dct_mode(i: int, j: int, n: int) -> np.ndarray:
    x = np.arange(n)
    ci = np.sqrt((1.0 if i == 0 else 2.0) / n)
    cj = np.sqrt((1.0 if j == 0 else 2.0) / n)
    col = ci * np.cos(np.pi * (2 * x + 1) * i / (2 * n))
    row = cj * np.cos(np.pi * (2 * x + 1) * j / (2 * n))
    return np.outer(col, row)


def _build_bank() -> np.ndarray:
    """First N_MODES non-DC DCT modes in zigzag order, flattened.

    Rows are orthonormal over the GRID x GRID cells, so block-averaging a
    rendered frame recovers carrier coefficients exactly.
    """
    order = sorted(
        ((i, j) for i in range(GRID) for j in range(GRID) if (i, j) != (0, 0)),
        key=lambda ij: (ij[0] + ij[1], ij[0]),
    )
    rows = [_dct_mode(i, j, GRID).reshape(-1) for i, j in order[:N_MODES]]
    return np.asarray(rows, dtype=np.float64)


MODE_BANK = _build_bank()  # (N_MODES, GRID*GRID)


class VideoLatents:
    """Per-video latent state; pure function of (seed, label)."""

    def __init__(self, seed: int, label: str, frame_count: int):
        if frame_count < 1:
            raise ValueError("frame_count must be positive")
        self.seed = seed
        self.label = label
        self.frame_count = frame_count
        rng = stable_rng("vid", seed, label)
        self.scene = rng.standard_normal(N_GLOBAL)
        self.dyn_freq = 1.0 + (np.arange(N_DYN) % 3)
        self.dyn_phase = rng.uniform(0.0, 2 * np.pi, size=N_DYN)
        self.motion_freq = 1.0 + float(rng.integers(0, 2))
        self.motion_phase = float(rng.uniform(0.0, 2 * np.pi))
        self.motion_pattern = self.scene[:N_MOTION]
        if label == "fake":
            alt = stable_rng("alt", seed)
            self.alt_motion_pattern = alt.standard_normal(N_MOTION)
        else:
            self.alt_motion_pattern = self.motion_pattern

    def smooth_dyn(self, u: int) -> np.ndarray:
        t = (u + 0.5) / self.frame_count
        return np.sin(2 * np.pi * self.dyn_freq * t + self.dyn_phase)

    def motion_profile(self, u: int) -> float:
        t = (u + 0.5) / self.frame_count
        return float(np.sin(2 * np.pi * self.motion_freq * t + self.motion_phase))

    def frame_coeffs(self, u: int) -> np.ndarray:
        c = np.zeros(N_MODES)
        dyn = self.smooth_dyn(u)
        c[SLICES["app_global"]] = self.scene
        c[SLICES["app_dyn"]] = dyn
        c[SLICES["depth_global"]] = self.scene
        c[SLICES["depth_dyn"]] = dyn
        c[SLICES["motion"]] = self.motion_pattern * self.motion_profile(u)
        if self.label == "real":
            c[SLICES["depth_dyn_alt"]] = dyn
            c[SLICES["motion_alt"]] = self.motion_pattern * self.motion_profile(u)
        else:
            jit = stable_rng("jit", self.seed, u)
            c[SLICES["depth_dyn_alt"]] = jit.standard_normal(N_DYN) * (
                JITTER_BOOST * PROFILE_RMS
            )
            c[SLICES["motion_alt"]] = self.alt_motion_pattern * float(
                jit.standard_normal() * JITTER_BOOST * PROFILE_RMS
            )
        return c


@lru_cache(maxsize=8)
def _latents(seed: int, label: str, frame_count: int) -> VideoLatents:
    return VideoLatents(seed, label, frame_count)


def render_frame(seed: int, label: str, u: int, frame_count: int) -> np.ndarray:
    """Render source frame `u` as a CANVAS x CANVAS x 3 float32 array in [0, 1]."""
    if not 0 <= u < frame_count:
        raise ValueError(f"frame index {u} out of range for {frame_count} frames")
    lat = _latents(seed, label, frame_count)
    field = (MODE_BANK.T @ (AMPLITUDE * lat.frame_coeffs(u))).astype(np.float32)
    payload = np.repeat(np.repeat(field.reshape(GRID, GRID), CELL, 0), CELL, 1)
    # uniform texture noise scaled to PIXEL_NOISE rms (cheaper than gaussian)
    canvas = stable_rng("px", seed, u).random((CANVAS, CANVAS, 3), dtype=np.float32)
    canvas -= np.float32(0.5)
    canvas *= np.float32(PIXEL_NOISE * np.sqrt(12.0))
    canvas += np.float32(0.5)
    canvas[MARGIN : MARGIN + PAYLOAD, MARGIN : MARGIN + PAYLOAD, :] += payload[:, :, None]
    np.clip(canvas, 0.0, 1.0, out=canvas)
    return canvas
