"""Persistent feature cache.

Entries are keyed by (video id, backend fingerprint, T). Files use the
shared binary tensor container; a checksum failure or fingerprint mismatch
is treated as a miss so extraction transparently recomputes.
"""

from __future__ import annotations

import hashlib
import logging
import re
from pathlib import Path

import torch

from ..tensorio import ContainerError, read_container, write_container
from .base import ModalityFeatures

log = logging.getLogger(__name__)

_SAFE = re.compile(r"[^A-Za-z0-9._-]")


def _slug(video_id: str) -> str:
    short = hashlib.sha1(video_id.encode("utf-8")).hexdigest()[:10]
    return f"{_SAFE.sub('_', video_id)[:80]}-{short}"


class FeatureCache:
    def __init__(self, root: str | Path, fingerprint: bytes):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.fingerprint = fingerprint

    def path(self, video_id: str, t: int) -> Path:
        return self.root / f"{_slug(video_id)}__T{t}.cvfd"

    def store(self, features: ModalityFeatures) -> Path:
        t = features.appearance_tokens.shape[0]
        tensors = {
            "appearance_tokens": features.appearance_tokens.detach().cpu().numpy(),
            "depth_tokens": features.depth_tokens.detach().cpu().numpy(),
            "motion_tokens": features.motion_tokens.detach().cpu().numpy(),
            "pooled_appearance": features.pooled_appearance.detach().cpu().numpy(),
            "pooled_depth": features.pooled_depth.detach().cpu().numpy(),
            "pooled_motion": features.pooled_motion.detach().cpu().numpy(),
        }
        path = self.path(features.video_id, t)
        write_container(path, self.fingerprint, tensors, meta=f"video_id={features.video_id}\n")
        return path

    def load(self, video_id: str, t: int) -> ModalityFeatures | None:
        path = self.path(video_id, t)
        if not path.exists():
            return None
        try:
            container = read_container(path)
        except ContainerError as exc:
            log.warning("feature cache miss (corrupt file): %s", exc)
            return None
        if container.fingerprint != self.fingerprint:
            return None
        if container.meta.strip() != f"video_id={video_id}":
            return None
        tensors = {k: torch.from_numpy(v) for k, v in container.tensors.items()}
        try:
            return ModalityFeatures(
                appearance_tokens=tensors["appearance_tokens"],
                depth_tokens=tensors["depth_tokens"],
                motion_tokens=tensors["motion_tokens"],
                pooled_appearance=tensors["pooled_appearance"],
                pooled_depth=tensors["pooled_depth"],
                pooled_motion=tensors["pooled_motion"],
                video_id=video_id,
            )
        except KeyError as exc:
            log.warning("feature cache miss (missing tensor %s): %s", exc, path)
            return None
