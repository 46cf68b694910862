"""L-infinity bounded gradient-sign attacks (single-step and iterated).

The attack functions are generic over a differentiable scalar loss of one
tensor. Pixel-space surfaces against the detector require a backend that
exposes gradients (the synthetic backend does); the appearance-only surface
perturbs only the pixels feeding the appearance extractor while depth and
motion see clean frames.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import torch

from .backbones import FeatureBackend, ModalityFeatures
from .fusion import DetectorModel
from .ingest import FrameBatch
from .training import bce_loss

SURFACES = ("appearance_only", "full_model")


class AttackSurfaceError(Exception):
    """No differentiable path exists for the requested attack surface."""


@dataclass
class AttackSpec:
    kind: str = "fgsm"
    epsilon: float = 8.0 / 255.0
    steps: int = 1
    step_size: float | None = None
    target: str = "appearance_only"

    def __post_init__(self):
        if self.kind == "pgd" and self.steps == 1:
            self.steps = 20
        if self.step_size is None:
            self.step_size = self.epsilon if self.kind == "fgsm" else 2.5 * self.epsilon / self.steps

    def validate(self) -> None:
        if self.kind not in ("fgsm", "pgd"):
            raise ValueError(f"unknown attack kind {self.kind!r}")
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.kind == "fgsm" and self.steps != 1:
            raise ValueError("fgsm is single-step")
        if self.step_size > self.epsilon:
            raise ValueError("step_size cannot exceed epsilon")
        if self.target not in SURFACES:
            raise ValueError(f"target must be one of {SURFACES}")


LossFn = Callable[[torch.Tensor], torch.Tensor]


def _grad(loss_fn: LossFn, x: torch.Tensor) -> torch.Tensor:
    x = x.detach().requires_grad_(True)
    loss = loss_fn(x)
    (grad,) = torch.autograd.grad(loss, x)
    return grad


def fgsm(
    loss_fn: LossFn,
    x: torch.Tensor,
    spec: AttackSpec,
    clamp: tuple[float, float] | None = (0.0, 1.0),
) -> torch.Tensor:
    """x + eps * sign(grad), clamped to the valid range."""
    spec.validate()
    adv = x.detach() + spec.epsilon * torch.sign(_grad(loss_fn, x))
    if clamp is not None:
        adv = adv.clamp(*clamp)
    return adv.detach()


def pgd(
    loss_fn: LossFn,
    x: torch.Tensor,
    spec: AttackSpec,
    clamp: tuple[float, float] | None = (0.0, 1.0),
) -> torch.Tensor:
    """Iterated gradient-sign steps, each projected back onto the epsilon
    ball around the original input and the valid range. No random start."""
    spec.validate()
    origin = x.detach()
    adv = origin.clone()
    for _ in range(spec.steps):
        adv = adv + spec.step_size * torch.sign(_grad(loss_fn, adv))
        adv = torch.max(torch.min(adv, origin + spec.epsilon), origin - spec.epsilon)
        if clamp is not None:
            adv = adv.clamp(*clamp)
    return adv.detach()


def run_attack(loss_fn: LossFn, x: torch.Tensor, spec: AttackSpec, clamp=(0.0, 1.0)):
    return (fgsm if spec.kind == "fgsm" else pgd)(loss_fn, x, spec, clamp=clamp)


def pixel_loss_fn(
    model: DetectorModel,
    backend: FeatureBackend,
    batch: FrameBatch,
    label: int,
    target: str,
) -> LossFn:
    """BCE loss of the detector as a function of the (perturbed) pixels."""
    if not backend.differentiable:
        raise AttackSurfaceError(
            "pixel-space attacks need a backend with gradients; "
            "use the synthetic backend or the feature-level surface"
        )
    if target not in SURFACES:
        raise ValueError(f"target must be one of {SURFACES}")
    model.eval()
    video_id = batch.video_id
    indices = list(batch.indices)
    y = torch.tensor(float(label))
    if target == "appearance_only":
        # depth and motion see clean frames; freeze their tokens once
        with torch.no_grad():
            clean_batch = FrameBatch(batch.pixels.detach(), indices, video_id)
            clean_depth = backend.extract_depth(clean_batch)
            clean_motion = backend.extract_motion(clean_batch)

    def loss_fn(x: torch.Tensor) -> torch.Tensor:
        adv_batch = FrameBatch(pixels=x, indices=indices, video_id=video_id)
        app = backend.extract_appearance(adv_batch)
        if target == "full_model":
            depth = backend.extract_depth(adv_batch)
            motion = backend.extract_motion(adv_batch)
        else:
            depth, motion = clean_depth, clean_motion
        feats = ModalityFeatures.from_tokens(app, depth, motion, video_id)
        acts = model.forward_features(feats)
        return bce_loss(acts.p, y.unsqueeze(0))

    return loss_fn


def feature_loss_fn(model: DetectorModel, features: ModalityFeatures, label: int) -> LossFn:
    """BCE loss as a function of the appearance token matrix (feature-level
    surface, used when the backend exposes no pixel gradients)."""
    model.eval()
    depth = features.depth_tokens.detach()
    motion = features.motion_tokens.detach()
    y = torch.tensor(float(label))

    def loss_fn(x: torch.Tensor) -> torch.Tensor:
        feats = ModalityFeatures.from_tokens(x, depth, motion, features.video_id)
        acts = model.forward_features(feats)
        return bce_loss(acts.p, y.unsqueeze(0))

    return loss_fn
