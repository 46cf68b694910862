"""Run configuration: one canonical key-sorted text file capturing the
backend, model, training, and augmentation settings plus data paths."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from . import kvtext
from .backbones import BackendSpec
from .fusion import ModelConfig
from .sampling import AugmentConfig
from .training import TrainConfig


@dataclass
class RunConfig:
    backend: BackendSpec = field(default_factory=BackendSpec)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    manifest: str = ""
    eval_manifest: str = ""
    cache_root: str = ""
    val_fraction: float = 0.1
    seed: int = 0
    encoder_bin: str = "ffmpeg"

    def validate(self) -> None:
        self.backend.validate()
        self.model.validate()
        self.train.validate()
        self.augment.validate()
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("val_fraction must be in (0, 1)")


def render_run_config(cfg: RunConfig) -> str:
    items: dict[str, object] = {}
    items.update(kvtext.dataclass_items(cfg.backend, "backend"))
    items.update(kvtext.dataclass_items(cfg.model, "model"))
    items.update(kvtext.dataclass_items(cfg.train, "train"))
    items.update(kvtext.dataclass_items(cfg.augment, "augment"))
    items["data.manifest"] = cfg.manifest
    items["data.eval_manifest"] = cfg.eval_manifest
    items["data.cache_root"] = cfg.cache_root
    items["data.val_fraction"] = cfg.val_fraction
    items["run.seed"] = cfg.seed
    items["tools.encoder"] = cfg.encoder_bin
    return kvtext.render_items(items)


def parse_run_config(text: str) -> RunConfig:
    items = kvtext.parse_items(text)
    cfg = RunConfig(
        backend=kvtext.dataclass_from_items(BackendSpec, "backend", items),
        model=kvtext.dataclass_from_items(ModelConfig, "model", items),
        train=kvtext.dataclass_from_items(TrainConfig, "train", items),
        augment=kvtext.dataclass_from_items(AugmentConfig, "augment", items),
    )
    cfg.manifest = items.get("data.manifest", "")
    cfg.eval_manifest = items.get("data.eval_manifest", "")
    cfg.cache_root = items.get("data.cache_root", "")
    cfg.val_fraction = float(items.get("data.val_fraction", "0.1"))
    cfg.seed = int(items.get("run.seed", "0"))
    cfg.encoder_bin = items.get("tools.encoder", "ffmpeg")
    return cfg


def load_run_config(path: str | Path) -> RunConfig:
    cfg = parse_run_config(Path(path).read_text(encoding="utf-8"))
    cfg.validate()
    return cfg


def save_run_config(cfg: RunConfig, path: str | Path) -> None:
    Path(path).write_text(render_run_config(cfg), encoding="utf-8")
