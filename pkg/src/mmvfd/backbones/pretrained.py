"""Pretrained-hub feature backend and the depth-map encoder.

The hub models (a CLIP vision tower for appearance, a video masked
autoencoder for motion, a monocular depth estimator for depth) stay frozen;
only their identifiers are configuration. When weights cannot be loaded the
backend fails loudly with a remediation message rather than silently
falling back to the synthetic backend.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from .. import synthvid
from ..ingest import FrameBatch
from .base import (
    BackendSpec,
    BackendUnavailableError,
    FeatureBackend,
    _hash32,
    partition_clips,
)

CLIP_PIXEL_MEAN = (0.48145466, 0.4578275, 0.40821073)
CLIP_PIXEL_STD = (0.26862954, 0.26130258, 0.27577711)
DEPTH_NORM_EPS = 1e-6

_VERSION = "pretrained:v1"


def normalize_depth_map(depth: torch.Tensor) -> torch.Tensor:
    """Instance-normalize depth maps: (D - mean) / (std + 1e-6) per frame.

    Accepts (H, W) or (T, H, W); a constant map normalizes to exactly zero.
    """
    single = depth.ndim == 2
    if single:
        depth = depth.unsqueeze(0)
    mean = depth.mean(dim=(1, 2), keepdim=True)
    std = depth.std(dim=(1, 2), keepdim=True, unbiased=False)
    out = (depth - mean) / (std + DEPTH_NORM_EPS)
    return out.squeeze(0) if single else out


class DepthNet(nn.Module):
    """Encoder for normalized depth maps: three 3x3 conv blocks with batch
    norm and stride-2 max-pooling, global average pool, linear to 128."""

    def __init__(self, out_dim: int = 128, init_seed: int = 0):
        super().__init__()
        channels = [1, 16, 32, 64]
        blocks = []
        for c_in, c_out in zip(channels[:-1], channels[1:]):
            blocks += [
                nn.Conv2d(c_in, c_out, kernel_size=3, padding=1),
                nn.BatchNorm2d(c_out),
                nn.ReLU(inplace=True),
                nn.MaxPool2d(kernel_size=2, stride=2),
            ]
        self.features = nn.Sequential(*blocks)
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.head = nn.Linear(channels[-1], out_dim)
        self._seed_parameters(init_seed)

    def _seed_parameters(self, seed: int) -> None:
        rng = np.random.Generator(np.random.PCG64(synthvid.stable_seed("depthnet", seed)))
        for name, p in sorted(self.named_parameters(), key=lambda kv: kv[0]):
            with torch.no_grad():
                if p.ndim > 1:
                    p.copy_(torch.from_numpy(rng.standard_normal(tuple(p.shape)) * 0.02).float())
                elif "weight" in name:  # norm scales
                    p.fill_(1.0)
                else:
                    p.zero_()

    def forward(self, maps: torch.Tensor) -> torch.Tensor:
        """(T, H, W) or (T, 1, H, W) normalized maps -> (T, 128) embeddings."""
        if maps.ndim == 3:
            maps = maps.unsqueeze(1)
        x = self.features(maps)
        x = self.pool(x).flatten(1)
        return self.head(x)


class PretrainedBackend(FeatureBackend):
    differentiable = False

    def __init__(self, spec: BackendSpec):
        spec.validate()
        if spec.kind != "pretrained":
            raise ValueError("PretrainedBackend requires kind='pretrained'")
        self.spec = spec
        self.depth_net = DepthNet(init_seed=spec.weights_seed).eval()
        self._models: dict[str, object] = {}

    @property
    def fingerprint(self) -> bytes:
        s = self.spec
        return _hash32(
            f"{_VERSION}:app={s.appearance_id}:depth={s.depth_id}"
            f":motion={s.motion_id}:seed={s.weights_seed}"
        )

    def _load(self, key: str, loader):
        if key not in self._models:
            try:
                self._models[key] = loader().eval()
            except Exception as exc:
                raise BackendUnavailableError(
                    f"cannot load {key} model {getattr(self.spec, key + '_id')!r}: {exc}. "
                    "Download the weights (network access and the `transformers` "
                    "package are required) or switch backend.kind to 'synthetic'."
                ) from exc
        return self._models[key]

    def _appearance_model(self):
        def loader():
            from transformers import CLIPVisionModelWithProjection

            return CLIPVisionModelWithProjection.from_pretrained(self.spec.appearance_id)

        return self._load("appearance", loader)

    def _depth_model(self):
        def loader():
            from transformers import DPTForDepthEstimation

            return DPTForDepthEstimation.from_pretrained(self.spec.depth_id)

        return self._load("depth", loader)

    def _motion_model(self):
        def loader():
            from transformers import VideoMAEModel

            return VideoMAEModel.from_pretrained(self.spec.motion_id)

        return self._load("motion", loader)

    @staticmethod
    def _to_chw(pixels: torch.Tensor) -> torch.Tensor:
        return pixels.permute(0, 3, 1, 2).contiguous()

    def extract_appearance(self, batch: FrameBatch) -> torch.Tensor:
        model = self._appearance_model()
        x = self._to_chw(batch.pixels)
        mean = torch.tensor(CLIP_PIXEL_MEAN).view(1, 3, 1, 1)
        std = torch.tensor(CLIP_PIXEL_STD).view(1, 3, 1, 1)
        with torch.no_grad():
            out = model(pixel_values=(x - mean) / std)
        return out.image_embeds.float()

    def extract_depth(self, batch: FrameBatch) -> torch.Tensor:
        model = self._depth_model()
        x = self._to_chw(batch.pixels)
        with torch.no_grad():
            depth = model(pixel_values=x).predicted_depth
            tokens = self.depth_net(normalize_depth_map(depth))
        return tokens.float()

    def extract_motion(self, batch: FrameBatch) -> torch.Tensor:
        model = self._motion_model()
        x = self._to_chw(batch.pixels)
        tokens = []
        with torch.no_grad():
            for clip in partition_clips(batch.pixels.shape[0]):
                frames = x[clip].unsqueeze(0)  # (1, clip_len, 3, H, W)
                hidden = model(pixel_values=frames).last_hidden_state
                tokens.append(hidden.mean(dim=1).squeeze(0))
        return torch.stack(tokens).float()
