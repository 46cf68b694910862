"""Training loop: Adam over the fusion network with a cosine learning-rate
schedule, binary cross-entropy loss, early stopping on validation loss, and
deterministic behaviour under a fixed seed. Feature backbones are frozen;
they are not even part of the optimized module."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
import torch

from . import kvtext
from .backbones import FeatureBackend
from .fusion import DetectorModel, ModelConfig, build_model
from .ingest import VideoManifest
from .pipeline import features_for_manifest, stacked_dataset
from .sampling import AugmentConfig
from .tensorio import read_container, write_container

PROB_EPS = 1e-7


class TrainingDiverged(Exception):
    pass


@dataclass
class TrainConfig:
    lr: float = 1e-5
    lr_min: float = 0.0
    epochs: int = 50
    batch_size: int = 32
    patience: int = 10
    seed: int = 0

    def validate(self) -> None:
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.patience > self.epochs:
            raise ValueError("patience cannot exceed epochs")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")


@dataclass
class TrainHistory:
    epochs: list[int] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)

    def append(self, epoch, train_loss, val_loss, val_accuracy, lr) -> None:
        self.epochs.append(epoch)
        self.train_loss.append(train_loss)
        self.val_loss.append(val_loss)
        self.val_accuracy.append(val_accuracy)
        self.lr.append(lr)

    def to_text(self) -> str:
        lines = ["epoch\ttrain_loss\tval_loss\tval_accuracy\tlr"]
        for i in range(len(self.epochs)):
            lines.append(
                f"{self.epochs[i]}\t{self.train_loss[i]!r}\t{self.val_loss[i]!r}"
                f"\t{self.val_accuracy[i]!r}\t{self.lr[i]!r}"
            )
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "TrainHistory":
        hist = cls()
        for line in text.splitlines()[1:]:
            epoch, tl, vl, va, lr = line.split("\t")
            hist.append(int(epoch), float(tl), float(vl), float(va), float(lr))
        return hist


def bce_loss(p, y) -> torch.Tensor:
    """Binary cross-entropy on probabilities, clamped away from {0, 1}."""
    p = p if torch.is_tensor(p) else torch.tensor(float(p), dtype=torch.float64)
    y = torch.as_tensor(y, dtype=p.dtype)
    p = torch.clamp(p, PROB_EPS, 1.0 - PROB_EPS)
    loss = -(y * torch.log(p) + (1.0 - y) * torch.log(1.0 - p))
    return loss.mean()


def cosine_lr(step: int, total_steps: int, cfg: TrainConfig) -> float:
    if not 0 <= step <= total_steps:
        raise ValueError("step must be in [0, total_steps]")
    return cfg.lr_min + 0.5 * (cfg.lr - cfg.lr_min) * (1.0 + math.cos(math.pi * step / total_steps))


@dataclass
class Checkpoint:
    model_cfg: ModelConfig
    state: dict[str, np.ndarray]
    step: int
    best_val_loss: float
    rng_fingerprint: str
    backend_fingerprint: bytes

    def build(self) -> DetectorModel:
        model = DetectorModel(self.model_cfg)
        tensors = {k: torch.from_numpy(v.copy()) for k, v in self.state.items()}
        model.load_state_dict(tensors)
        model.eval()
        return model

    def save(self, path) -> None:
        meta = dict(kvtext.dataclass_items(self.model_cfg, "model"))
        meta["checkpoint.step"] = self.step
        meta["checkpoint.best_val_loss"] = self.best_val_loss
        meta["checkpoint.rng_fingerprint"] = self.rng_fingerprint
        write_container(
            path, self.backend_fingerprint, self.state, meta=kvtext.render_items(meta)
        )

    @classmethod
    def load(cls, path) -> "Checkpoint":
        container = read_container(path)
        items = kvtext.parse_items(container.meta)
        model_cfg = kvtext.dataclass_from_items(ModelConfig, "model", items)
        return cls(
            model_cfg=model_cfg,
            state=container.tensors,
            step=int(items["checkpoint.step"]),
            best_val_loss=float(items["checkpoint.best_val_loss"]),
            rng_fingerprint=items["checkpoint.rng_fingerprint"],
            backend_fingerprint=container.fingerprint,
        )


def _state_numpy(model: DetectorModel) -> dict[str, np.ndarray]:
    return {k: v.detach().cpu().numpy().copy() for k, v in model.state_dict().items()}


def _rng_fingerprint(seed: int) -> str:
    return hashlib.sha256(f"torch-cpu:seed={seed}".encode()).hexdigest()[:16]


def train(
    train_manifest: VideoManifest,
    val_manifest: VideoManifest,
    backend: FeatureBackend,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    cache=None,
    augment_cfg: AugmentConfig | None = None,
) -> tuple[Checkpoint, TrainHistory]:
    """Optimize the fusion network on extracted features.

    Early-stops when validation loss has not improved for `patience` epochs
    and returns the checkpoint of the best (earliest on ties) epoch.
    Deterministic for a fixed seed and single-worker data order.
    """
    train_cfg.validate()
    for manifest, name in ((train_manifest, "train"), (val_manifest, "validation")):
        counts = manifest.label_counts()
        if min(counts.values()) == 0:
            raise ValueError(f"{name} manifest must contain both labels")

    augmenting = augment_cfg is not None and augment_cfg.enabled

    val_feats, _ = features_for_manifest(val_manifest, backend, model_cfg.t, cache=cache)
    val_app, val_depth, val_motion, val_y = stacked_dataset(
        val_feats, [e.y for e in val_manifest.entries], model_cfg.kv_mode
    )
    if not augmenting:
        base_feats, _ = features_for_manifest(train_manifest, backend, model_cfg.t, cache=cache)

    labels = [e.y for e in train_manifest.entries]
    n_train = len(train_manifest)
    steps_per_epoch = -(-n_train // train_cfg.batch_size)
    total_steps = steps_per_epoch * train_cfg.epochs

    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(train_cfg.seed)
        model = build_model(model_cfg, train_cfg.seed)
        optimizer = torch.optim.Adam(
            model.parameters(), lr=train_cfg.lr, betas=(0.9, 0.999), eps=1e-8
        )
        shuffle_gen = torch.Generator().manual_seed(train_cfg.seed)

        history = TrainHistory()
        best_val = math.inf
        best_state = _state_numpy(model)
        best_step = 0
        stale = 0
        global_step = 0

        for epoch in range(train_cfg.epochs):
            if augmenting:
                from .pipeline import features_for_entry

                aug_rng = np.random.Generator(
                    np.random.PCG64(augment_cfg.rng_seed + epoch)
                )
                epoch_feats = [
                    features_for_entry(
                        e, backend, model_cfg.t, augment_cfg=augment_cfg, aug_rng=aug_rng
                    )
                    for e in train_manifest.entries
                ]
            else:
                epoch_feats = base_feats
            app, depth, motion, y = stacked_dataset(epoch_feats, labels, model_cfg.kv_mode)

            model.train()
            perm = torch.randperm(n_train, generator=shuffle_gen)
            epoch_loss = 0.0
            epoch_first_lr = None
            for b in range(steps_per_epoch):
                idx = perm[b * train_cfg.batch_size : (b + 1) * train_cfg.batch_size]
                lr = cosine_lr(global_step, total_steps, train_cfg)
                if epoch_first_lr is None:
                    epoch_first_lr = lr
                for group in optimizer.param_groups:
                    group["lr"] = lr
                optimizer.zero_grad()
                acts = model(app[idx], depth[idx], motion[idx])
                loss = bce_loss(acts.p, y[idx])
                if not torch.isfinite(loss):
                    raise TrainingDiverged(f"non-finite loss at step {global_step}")
                loss.backward()
                optimizer.step()
                epoch_loss += float(loss.detach()) * len(idx)
                global_step += 1

            model.eval()
            with torch.no_grad():
                val_acts = model(val_app, val_depth, val_motion)
                val_loss = float(bce_loss(val_acts.p, val_y))
                val_acc = float(((val_acts.p >= 0.5).float() == val_y).float().mean())
            history.append(epoch, epoch_loss / n_train, val_loss, val_acc, epoch_first_lr)

            if val_loss < best_val:
                best_val = val_loss
                best_state = _state_numpy(model)
                best_step = global_step
                stale = 0
            else:
                stale += 1
                if stale > train_cfg.patience:
                    break

    checkpoint = Checkpoint(
        model_cfg=model_cfg,
        state=best_state,
        step=best_step,
        best_val_loss=best_val,
        rng_fingerprint=_rng_fingerprint(train_cfg.seed),
        backend_fingerprint=backend.fingerprint,
    )
    return checkpoint, history
