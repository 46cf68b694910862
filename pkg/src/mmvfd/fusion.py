"""The learnable detector.

Per-modality projections into a shared latent space, a temporal transformer
encoder with learnable positional embedding over the appearance sequence,
two parallel cross-attention blocks in which appearance queries motion and
depth evidence (out-projection and residual included, head-averaged weights
exposed), mean-pool-and-concatenate fusion, and an MLP classifier ending in
a sigmoid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
from torch import nn

from .backbones import D_APP, D_DEPTH, D_MOTION, ModalityFeatures

KV_MODES = ("token", "pooled")


@dataclass
class ModelConfig:
    d: int = 256
    d_app: int = D_APP
    d_depth: int = D_DEPTH
    d_motion: int = D_MOTION
    t: int = 16
    heads: int = 8
    temporal_layers: int = 2
    classifier_widths: tuple[int, ...] = (768, 512, 256, 1)
    dropout: tuple[float, ...] = (0.5, 0.3)
    kv_mode: str = "token"

    def validate(self) -> None:
        if self.classifier_widths[0] != 3 * self.d:
            raise ValueError("classifier input width must be 3*d")
        if self.classifier_widths[-1] != 1:
            raise ValueError("classifier must end in a single logit")
        if self.d % self.heads != 0:
            raise ValueError("d must be divisible by the head count")
        if self.kv_mode not in KV_MODES:
            raise ValueError(f"kv_mode must be one of {KV_MODES}")
        if len(self.dropout) != len(self.classifier_widths) - 2:
            raise ValueError("need one dropout rate per hidden classifier layer")


@dataclass
class FusionActivations:
    """Intermediate tensors of a forward pass, batched along dim 0."""

    h_app: torch.Tensor        # (B, T, d)
    h_app_temp: torch.Tensor   # (B, T, d)
    h_motion: torch.Tensor     # (B, M, d)
    h_depth: torch.Tensor      # (B, K, d)
    h_app_motion: torch.Tensor # (B, T, d)
    h_app_depth: torch.Tensor  # (B, T, d)
    attn_motion: torch.Tensor  # (B, T, M) row-stochastic
    attn_depth: torch.Tensor   # (B, T, K) row-stochastic
    z: torch.Tensor            # (B, 3d)
    p: torch.Tensor            # (B,)

    def __len__(self) -> int:
        return self.p.shape[0]

    def video(self, i: int) -> "FusionActivations":
        return FusionActivations(*(getattr(self, f.name)[i : i + 1] for f in _ACT_FIELDS))


_ACT_FIELDS = FusionActivations.__dataclass_fields__.values()


def _ensure_batched(x: torch.Tensor) -> tuple[torch.Tensor, bool]:
    if x.ndim == 2:
        return x.unsqueeze(0), True
    return x, False


def fuse(
    h_app_temp: torch.Tensor, h_app_motion: torch.Tensor, h_app_depth: torch.Tensor
) -> torch.Tensor:
    """Concatenate the temporal means of the three streams -> (B, 3d) or (3d,)."""
    parts = []
    squeeze = False
    for x in (h_app_temp, h_app_motion, h_app_depth):
        x, squeeze = _ensure_batched(x)
        parts.append(x.mean(dim=1))
    z = torch.cat(parts, dim=-1)
    return z.squeeze(0) if squeeze else z


class CrossAttention(nn.Module):
    """Multi-head attention with one stream as query and another as key/value.

    Returns the attended tokens (after the output projection, no residual)
    and the head-averaged attention weights.
    """

    def __init__(self, d: int, heads: int):
        super().__init__()
        self.attn = nn.MultiheadAttention(d, heads, batch_first=True)

    def forward(self, query: torch.Tensor, kv: torch.Tensor):
        query, squeeze = _ensure_batched(query)
        kv, _ = _ensure_batched(kv)
        if query.shape[-1] != kv.shape[-1]:
            raise ValueError("query and key/value token widths differ")
        out, weights = self.attn(
            query, kv, kv, need_weights=True, average_attn_weights=True
        )
        if squeeze:
            return out.squeeze(0), weights.squeeze(0)
        return out, weights


class TemporalEncoder(nn.Module):
    """Pre-norm transformer encoder over the appearance token sequence with a
    learnable positional embedding added first."""

    def __init__(self, d: int, t: int, heads: int, layers: int):
        super().__init__()
        self.pos_embed = nn.Parameter(torch.empty(t, d))
        nn.init.trunc_normal_(self.pos_embed, std=0.02)
        layer = nn.TransformerEncoderLayer(
            d_model=d,
            nhead=heads,
            dim_feedforward=4 * d,
            dropout=0.0,
            activation="gelu",
            batch_first=True,
            norm_first=True,
        )
        self.encoder = nn.TransformerEncoder(layer, num_layers=layers, enable_nested_tensor=False)

    def forward(self, h_app: torch.Tensor) -> torch.Tensor:
        h_app, squeeze = _ensure_batched(h_app)
        if h_app.shape[1] != self.pos_embed.shape[0]:
            raise ValueError(
                f"expected {self.pos_embed.shape[0]} frames, got {h_app.shape[1]}"
            )
        out = self.encoder(h_app + self.pos_embed)
        return out.squeeze(0) if squeeze else out


class Classifier(nn.Module):
    """MLP head: hidden layers with GELU, dropout, and layer norm; terminal
    linear plus sigmoid."""

    def __init__(self, widths: tuple[int, ...], dropout: tuple[float, ...]):
        super().__init__()
        layers: list[nn.Module] = []
        for i, (w_in, w_out) in enumerate(zip(widths[:-2], widths[1:-1])):
            layers += [
                nn.Linear(w_in, w_out),
                nn.GELU(),
                nn.Dropout(dropout[i]),
                nn.LayerNorm(w_out),
            ]
        layers.append(nn.Linear(widths[-2], widths[-1]))
        self.net = nn.Sequential(*layers)

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        logit = self.net(z).squeeze(-1)
        return torch.sigmoid(logit)


class DetectorModel(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.proj_app = nn.Linear(cfg.d_app, cfg.d)
        self.proj_motion = nn.Linear(cfg.d_motion, cfg.d)
        self.proj_depth = nn.Linear(cfg.d_depth, cfg.d)
        for proj in (self.proj_app, self.proj_motion, self.proj_depth):
            nn.init.trunc_normal_(proj.weight, std=0.02)
            nn.init.zeros_(proj.bias)
        self.temporal = TemporalEncoder(cfg.d, cfg.t, cfg.heads, cfg.temporal_layers)
        self.cross_motion = CrossAttention(cfg.d, cfg.heads)
        self.cross_depth = CrossAttention(cfg.d, cfg.heads)
        self.classifier = Classifier(cfg.classifier_widths, cfg.dropout)

    def project(self, tokens: torch.Tensor, modality: str) -> torch.Tensor:
        proj = {"app": self.proj_app, "motion": self.proj_motion, "depth": self.proj_depth}[
            modality
        ]
        if tokens.shape[-1] != proj.in_features:
            raise ValueError(
                f"{modality} tokens have width {tokens.shape[-1]}, "
                f"expected {proj.in_features}"
            )
        return proj(tokens)

    def forward(
        self,
        appearance: torch.Tensor,  # (B, T, 512)
        depth: torch.Tensor,       # (B, T, 128) token mode / (B, 1, 128) pooled
        motion: torch.Tensor,      # (B, N, 768) token mode / (B, 1, 768) pooled
    ) -> FusionActivations:
        h_app = self.project(appearance, "app")
        h_motion = self.project(motion, "motion")
        h_depth = self.project(depth, "depth")
        h_app_temp = self.temporal(h_app)
        attn_m_out, attn_m = self.cross_motion(h_app_temp, h_motion)
        attn_d_out, attn_d = self.cross_depth(h_app_temp, h_depth)
        h_app_motion = h_app_temp + attn_m_out
        h_app_depth = h_app_temp + attn_d_out
        z = fuse(h_app_temp, h_app_motion, h_app_depth)
        p = self.classifier(z)
        return FusionActivations(
            h_app=h_app,
            h_app_temp=h_app_temp,
            h_motion=h_motion,
            h_depth=h_depth,
            h_app_motion=h_app_motion,
            h_app_depth=h_app_depth,
            attn_motion=attn_m,
            attn_depth=attn_d,
            z=z,
            p=p,
        )

    def forward_features(self, features: ModalityFeatures | list[ModalityFeatures]):
        """Run single or stacked per-video features through the model."""
        if isinstance(features, ModalityFeatures):
            features = [features]
        app, depth, motion = stack_features(features, self.cfg.kv_mode)
        return self.forward(app, depth, motion)


def stack_features(
    features: list[ModalityFeatures], kv_mode: str
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    app = torch.stack([f.appearance_tokens for f in features])
    if kv_mode == "pooled":
        depth = torch.stack([f.pooled_depth.unsqueeze(0) for f in features])
        motion = torch.stack([f.pooled_motion.unsqueeze(0) for f in features])
    else:
        depth = torch.stack([f.depth_tokens for f in features])
        motion = torch.stack([f.motion_tokens for f in features])
    return app, depth, motion


def build_model(cfg: ModelConfig, seed: int) -> DetectorModel:
    """Deterministically initialized model; global RNG state is untouched."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        model = DetectorModel(cfg)
    return model
