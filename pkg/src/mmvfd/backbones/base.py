"""Uniform interface over modality feature extractors.

Every backend turns a decoded FrameBatch into three token sequences:
appearance (T x 512), depth (T x 128), and motion (N x 768, one token per
non-overlapping clip of `CLIP_LEN` frames), plus their temporal means.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import torch

from ..ingest import FrameBatch

D_APP = 512
D_DEPTH = 128
D_MOTION = 768
CLIP_LEN = 16

KINDS = ("pretrained", "synthetic")


class BackendUnavailableError(Exception):
    """A backend cannot run (e.g. pretrained weights are not present)."""


@dataclass
class BackendSpec:
    kind: str = "synthetic"
    appearance_id: str = ""
    depth_id: str = ""
    motion_id: str = ""
    separability: float = 0.8
    weights_seed: int = 0

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.kind == "pretrained" and not (
            self.appearance_id and self.depth_id and self.motion_id
        ):
            raise ValueError("pretrained backend requires all three model identifiers")
        if not 0.0 <= self.separability <= 1.0:
            raise ValueError("separability must be in [0, 1]")


def pool_tokens(tokens: torch.Tensor) -> torch.Tensor:
    """Arithmetic mean over token rows."""
    if tokens.ndim != 2 or tokens.shape[0] < 1:
        raise ValueError("tokens must be a non-empty K x d tensor")
    return tokens.mean(dim=0)


def partition_clips(t: int, clip_len: int = CLIP_LEN) -> list[list[int]]:
    """Non-overlapping clip index lists covering T frames, padded by cyclic
    repetition when T is not a multiple of clip_len."""
    if t < 1:
        raise ValueError("t must be positive")
    n = -(-t // clip_len)
    return [[(c * clip_len + i) % t for i in range(clip_len)] for c in range(n)]


@dataclass
class ModalityFeatures:
    appearance_tokens: torch.Tensor  # (T, 512)
    depth_tokens: torch.Tensor       # (T, 128)
    motion_tokens: torch.Tensor      # (N, 768)
    pooled_appearance: torch.Tensor
    pooled_depth: torch.Tensor
    pooled_motion: torch.Tensor
    video_id: str

    @classmethod
    def from_tokens(
        cls,
        appearance: torch.Tensor,
        depth: torch.Tensor,
        motion: torch.Tensor,
        video_id: str,
    ) -> "ModalityFeatures":
        return cls(
            appearance_tokens=appearance,
            depth_tokens=depth,
            motion_tokens=motion,
            pooled_appearance=pool_tokens(appearance),
            pooled_depth=pool_tokens(depth),
            pooled_motion=pool_tokens(motion),
            video_id=video_id,
        )

    def validate(self) -> None:
        t = self.appearance_tokens.shape[0]
        if self.appearance_tokens.shape != (t, D_APP):
            raise ValueError("appearance tokens must be T x 512")
        if self.depth_tokens.shape != (t, D_DEPTH):
            raise ValueError("depth tokens must be T x 128")
        n = -(-t // CLIP_LEN)
        if self.motion_tokens.shape != (n, D_MOTION):
            raise ValueError(f"motion tokens must be {n} x 768 for T={t}")
        for name in ("appearance", "depth", "motion"):
            tokens = getattr(self, f"{name}_tokens")
            pooled = getattr(self, f"pooled_{name}")
            if not torch.isfinite(tokens).all():
                raise ValueError(f"{name} tokens contain non-finite values")
            if not torch.allclose(pooled, tokens.mean(dim=0), atol=1e-5):
                raise ValueError(f"pooled_{name} is not the token row mean")


class FeatureBackend:
    """Base class; concrete backends implement the three extractors."""

    spec: BackendSpec
    differentiable: bool = False

    def extract_appearance(self, batch: FrameBatch) -> torch.Tensor:
        raise NotImplementedError

    def extract_depth(self, batch: FrameBatch) -> torch.Tensor:
        raise NotImplementedError

    def extract_motion(self, batch: FrameBatch) -> torch.Tensor:
        raise NotImplementedError

    def extract(self, batch: FrameBatch) -> ModalityFeatures:
        return ModalityFeatures.from_tokens(
            self.extract_appearance(batch),
            self.extract_depth(batch),
            self.extract_motion(batch),
            batch.video_id,
        )

    @property
    def fingerprint(self) -> bytes:
        raise NotImplementedError


def _hash32(text: str) -> bytes:
    return hashlib.sha256(text.encode("utf-8")).digest()


# module-level operation surface; concrete dispatch lives on the backend
def extract_appearance(batch: FrameBatch, backend: FeatureBackend) -> torch.Tensor:
    return backend.extract_appearance(batch)


def extract_depth(batch: FrameBatch, backend: FeatureBackend) -> torch.Tensor:
    return backend.extract_depth(batch)


def extract_motion(batch: FrameBatch, backend: FeatureBackend) -> torch.Tensor:
    return backend.extract_motion(batch)
