"""Signal-degradation and photometric perturbation operators.

All operators consume a decoded FrameBatch and return a new one with pixels
clamped to [0, 1]. Noise is re-sampled per frame; blur kernels and
photometric parameters are constant across a video. Compression delegates
to an external encoder binary and is reported as unavailable when that
binary is missing - never silently faked.
"""

from __future__ import annotations

import shutil
import subprocess
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .ingest import FrameBatch
from .sampling import _hue_matrix, _luma
from .synthvid import stable_rng

KINDS = (
    "compress_crf",
    "gauss_noise",
    "salt_pepper",
    "gauss_blur",
    "defocus_blur",
    "motion_blur",
    "brightness",
    "contrast",
    "saturation",
    "hue",
)


class EncoderUnavailable(Exception):
    pass


@dataclass
class PerturbationSpec:
    kind: str
    magnitude: float
    rng_seed: int = 0

    def validate(self) -> None:
        m = self.magnitude
        if self.kind not in KINDS:
            raise ValueError(f"unknown perturbation kind {self.kind!r}")
        if self.kind == "compress_crf" and not (0 <= m <= 51 and m == int(m)):
            raise ValueError("CRF must be an integer in [0, 51]")
        if self.kind == "gauss_noise" and m < 0:
            raise ValueError("noise sigma must be non-negative")
        if self.kind == "salt_pepper" and not 0 <= m <= 1:
            raise ValueError("salt-pepper probability must be in [0, 1]")
        if self.kind == "gauss_blur" and m <= 0:
            raise ValueError("blur sigma must be positive")
        if self.kind in ("defocus_blur", "motion_blur") and not (
            m == int(m) and int(m) > 0 and int(m) % 2 == 1
        ):
            raise ValueError(f"{self.kind} magnitude must be an odd positive integer")
        if self.kind == "brightness" and not -1 <= m <= 1:
            raise ValueError("brightness offset must be in [-1, 1]")
        if self.kind == "contrast" and m < 0:
            raise ValueError("contrast factor must be non-negative")
        if self.kind == "saturation" and m < 0:
            raise ValueError("saturation factor must be non-negative")
        if self.kind == "hue" and not -180 <= m <= 180:
            raise ValueError("hue rotation must be in [-180, 180] degrees")


def gaussian_kernel(sigma: float) -> torch.Tensor:
    """2D Gaussian truncated at 3 sigma, renormalized to sum 1."""
    radius = int(np.ceil(3 * sigma))
    ax = np.arange(-radius, radius + 1, dtype=np.float64)
    xx, yy = np.meshgrid(ax, ax)
    k = np.exp(-(xx**2 + yy**2) / (2 * sigma**2))
    return torch.from_numpy(k / k.sum()).to(torch.float32)


def disk_kernel(radius: int) -> torch.Tensor:
    ax = np.arange(-radius, radius + 1, dtype=np.float64)
    xx, yy = np.meshgrid(ax, ax)
    k = (xx**2 + yy**2 <= radius**2).astype(np.float64)
    return torch.from_numpy(k / k.sum()).to(torch.float32)


def motion_kernel(length: int, angle_deg: float) -> torch.Tensor:
    """Length-L horizontal line kernel rotated by the given angle."""
    import cv2

    k = np.zeros((length, length), dtype=np.float64)
    k[length // 2, :] = 1.0
    center = ((length - 1) / 2.0, (length - 1) / 2.0)
    rot = cv2.getRotationMatrix2D(center, angle_deg, 1.0)
    k = cv2.warpAffine(k, rot, (length, length), flags=cv2.INTER_LINEAR)
    total = k.sum()
    if total <= 0:
        raise ValueError("degenerate motion kernel")
    return torch.from_numpy(k / total).to(torch.float32)


def _convolve(pixels: torch.Tensor, kernel: torch.Tensor) -> torch.Tensor:
    t, h, w, c = pixels.shape
    x = pixels.permute(0, 3, 1, 2).reshape(t * c, 1, h, w)
    pad = kernel.shape[0] // 2
    x = F.pad(x, (pad, pad, pad, pad), mode="reflect")
    out = F.conv2d(x, kernel.view(1, 1, *kernel.shape))
    return out.reshape(t, c, h, w).permute(0, 2, 3, 1)


def perturb(batch: FrameBatch, spec: PerturbationSpec) -> FrameBatch:
    spec.validate()
    if spec.kind == "compress_crf":
        raise ValueError("compress_crf operates on media files; use compress()")
    pixels = batch.pixels
    m = spec.magnitude
    rng = stable_rng("perturb", spec.kind, spec.rng_seed, batch.video_id)

    if spec.kind == "gauss_noise":
        if m > 0:
            noise = torch.from_numpy(
                rng.standard_normal(tuple(pixels.shape)).astype(np.float32)
            )
            pixels = pixels + m * noise
    elif spec.kind == "salt_pepper":
        if m > 0:
            t, h, w, _ = pixels.shape
            flip = rng.random((t, h, w)) < m
            salt = rng.random((t, h, w)) < 0.5
            pixels = pixels.clone()
            value = torch.from_numpy(salt.astype(np.float32)).unsqueeze(-1).expand_as(pixels)
            mask = torch.from_numpy(flip).unsqueeze(-1).expand_as(pixels)
            pixels = torch.where(mask, value, pixels)
    elif spec.kind == "gauss_blur":
        pixels = _convolve(pixels, gaussian_kernel(m))
    elif spec.kind == "defocus_blur":
        pixels = _convolve(pixels, disk_kernel(int(m)))
    elif spec.kind == "motion_blur":
        angle = float(rng.uniform(0.0, 180.0))
        pixels = _convolve(pixels, motion_kernel(int(m), angle))
    elif spec.kind == "brightness":
        pixels = pixels + m
    elif spec.kind == "contrast":
        pixels = 0.5 + m * (pixels - 0.5)
    elif spec.kind == "saturation":
        luma = _luma(pixels)
        pixels = luma + m * (pixels - luma)
    elif spec.kind == "hue":
        mat = _hue_matrix(np.deg2rad(m))
        pixels = pixels @ mat.T
    pixels = pixels.clamp(0.0, 1.0)
    return FrameBatch(pixels=pixels, indices=list(batch.indices), video_id=batch.video_id)


def compress(
    video_path: str | Path,
    crf: int,
    encoder: str = "ffmpeg",
    out_path: str | Path | None = None,
) -> Path:
    """Re-encode a media file at the given constant rate factor.

    Raises EncoderUnavailable when the encoder binary is missing; callers
    must surface this as an explicit "compression unavailable" marker.
    """
    if shutil.which(encoder) is None:
        raise EncoderUnavailable(f"encoder binary {encoder!r} not found on PATH")
    video_path = Path(video_path)
    if out_path is None:
        out_path = video_path.with_name(f"{video_path.stem}_crf{crf}{video_path.suffix}")
    cmd = [
        encoder, "-y", "-loglevel", "error",
        "-i", str(video_path),
        "-c:v", "libx264", "-crf", str(int(crf)),
        str(out_path),
    ]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.returncode != 0:
        raise RuntimeError(f"encoder failed ({proc.returncode}): {proc.stderr.strip()}")
    _check_frame_count(video_path, Path(out_path))
    return Path(out_path)


def _check_frame_count(original: Path, encoded: Path) -> None:
    import cv2

    counts = []
    for p in (original, encoded):
        cap = cv2.VideoCapture(str(p))
        counts.append(int(cap.get(cv2.CAP_PROP_FRAME_COUNT)))
        cap.release()
    if counts[0] != counts[1]:
        raise RuntimeError(
            f"re-encode changed frame count: {counts[0]} -> {counts[1]} for {encoded}"
        )
