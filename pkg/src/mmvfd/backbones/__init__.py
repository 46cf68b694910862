from .base import (
    BackendSpec,
    BackendUnavailableError,
    CLIP_LEN,
    D_APP,
    D_DEPTH,
    D_MOTION,
    FeatureBackend,
    ModalityFeatures,
    extract_appearance,
    extract_depth,
    extract_motion,
    partition_clips,
    pool_tokens,
)
from .cache import FeatureCache
from .pretrained import DepthNet, PretrainedBackend, normalize_depth_map
from .synthetic import SyntheticBackend


def make_backend(spec: BackendSpec) -> FeatureBackend:
    spec.validate()
    if spec.kind == "synthetic":
        return SyntheticBackend(spec)
    return PretrainedBackend(spec)


__all__ = [
    "BackendSpec",
    "BackendUnavailableError",
    "CLIP_LEN",
    "D_APP",
    "D_DEPTH",
    "D_MOTION",
    "DepthNet",
    "FeatureBackend",
    "FeatureCache",
    "ModalityFeatures",
    "PretrainedBackend",
    "SyntheticBackend",
    "extract_appearance",
    "extract_depth",
    "extract_motion",
    "make_backend",
    "normalize_depth_map",
    "partition_clips",
    "pool_tokens",
]
