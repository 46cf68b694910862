"""Deterministic synthetic feature backend.

Extraction is a pure, differentiable function of the frame pixels: frames
are block-averaged onto the renderer's 16x16 carrier grid, projected onto
the orthonormal mode bank to recover latent coordinates, and embedded into
token space through fixed semi-orthogonal matrices.

The `separability` knob convexly mixes the consistent carrier set with the
alternative one. Real clips carry identical content on both sets, so they
are unaffected; fake clips expose their independent, temporally incoherent
latents in proportion to the knob.
"""

from __future__ import annotations

import numpy as np
import torch

from .. import synthvid
from ..ingest import FrameBatch
from .base import (
    BackendSpec,
    D_APP,
    D_DEPTH,
    D_MOTION,
    FeatureBackend,
    _hash32,
    partition_clips,
)

_VERSION = "synthetic:v1"
_RMS_EPS = 1e-8


def _semi_orthogonal(rng: np.random.Generator, rows: int, cols: int) -> torch.Tensor:
    q, _ = np.linalg.qr(rng.standard_normal((rows, cols)))
    return torch.from_numpy(np.ascontiguousarray(q)).to(torch.float32)


class SyntheticBackend(FeatureBackend):
    differentiable = True

    def __init__(self, spec: BackendSpec):
        spec.validate()
        if spec.kind != "synthetic":
            raise ValueError("SyntheticBackend requires kind='synthetic'")
        self.spec = spec
        rng = synthvid.stable_rng(_VERSION, "weights", spec.weights_seed)
        n_dyn = synthvid.N_DYN
        n_lat = synthvid.N_GLOBAL + n_dyn
        self.embed_app = _semi_orthogonal(rng, D_APP, n_lat)
        self.embed_depth = _semi_orthogonal(rng, D_DEPTH, n_lat)
        self.embed_motion = _semi_orthogonal(rng, D_MOTION, 2 * synthvid.N_MOTION)
        self.motion_bias = (
            torch.from_numpy(rng.standard_normal(D_MOTION)).to(torch.float32) * 0.05
        )
        self.bank = torch.from_numpy(synthvid.MODE_BANK).to(torch.float32)

    @property
    def fingerprint(self) -> bytes:
        return _hash32(
            f"{_VERSION}:seed={self.spec.weights_seed}:sep={self.spec.separability!r}"
        )

    def _grid(self, pixels: torch.Tensor) -> torch.Tensor:
        """Block-average the payload region onto the carrier grid -> (T, 256)."""
        m, p, g, c = synthvid.MARGIN, synthvid.PAYLOAD, synthvid.GRID, synthvid.CELL
        if pixels.shape[1] == synthvid.CANVAS:
            pixels = pixels[:, m : m + p, m : m + p, :]
        t = pixels.shape[0]
        cells = pixels.reshape(t, g, c, g, c, 3).mean(dim=(2, 4, 5))
        return cells.reshape(t, g * g)

    def _reads(self, pixels: torch.Tensor) -> torch.Tensor:
        """Carrier coefficients per frame -> (T, N_MODES), unit latent scale."""
        return (self._grid(pixels) @ self.bank.T) / synthvid.AMPLITUDE

    def _mix(self, consistent: torch.Tensor, alt: torch.Tensor) -> torch.Tensor:
        s = self.spec.separability
        return (1.0 - s) * consistent + s * alt

    def extract_appearance(self, batch: FrameBatch) -> torch.Tensor:
        reads = self._reads(batch.pixels)
        lat = torch.cat(
            [reads[:, synthvid.SLICES["app_global"]], reads[:, synthvid.SLICES["app_dyn"]]],
            dim=1,
        )
        return lat @ self.embed_app.T

    def extract_depth(self, batch: FrameBatch) -> torch.Tensor:
        reads = self._reads(batch.pixels)
        dyn = self._mix(
            reads[:, synthvid.SLICES["depth_dyn"]],
            reads[:, synthvid.SLICES["depth_dyn_alt"]],
        )
        lat = torch.cat([reads[:, synthvid.SLICES["depth_global"]], dyn], dim=1)
        return lat @ self.embed_depth.T

    def extract_motion(self, batch: FrameBatch) -> torch.Tensor:
        reads = self._reads(batch.pixels)
        tokens = []
        for clip in partition_clips(batch.pixels.shape[0]):
            clip_reads = reads[clip]
            diffs = clip_reads[1:] - clip_reads[:-1]
            mix = self._mix(
                diffs[:, synthvid.SLICES["motion"]],
                diffs[:, synthvid.SLICES["motion_alt"]],
            )
            feat = torch.cat(
                [torch.sqrt(mix.pow(2).mean(dim=0) + _RMS_EPS), mix.mean(dim=0)]
            )
            tokens.append(feat @ self.embed_motion.T + self.motion_bias)
        return torch.stack(tokens)

    def zero_motion_signature(self) -> torch.Tensor:
        """Motion token every static clip maps to."""
        zero = torch.zeros(synthvid.N_MOTION)
        feat = torch.cat([torch.sqrt(zero.pow(2) + _RMS_EPS), zero])
        return feat @ self.embed_motion.T + self.motion_bias
