"""Manifest loading, frame decoding, and deterministic holdout splits.

Label convention: real = 1, fake = 0, matching the classifier contract
(real iff the predicted probability is at least 0.5).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import synthvid

SCHEMA_VERSION = 1
LABELS = {"real": 1, "fake": 0}
SYNTHETIC_PREFIX = "synthetic:"

FRAME_SIZE = 224
RESIZE_SIZE = 256


class ManifestError(Exception):
    pass


class DecodeError(Exception):
    pass


@dataclass
class ManifestEntry:
    id: str
    label: str
    generator: str
    source: str
    frame_count: int | None = None

    @property
    def y(self) -> int:
        return LABELS[self.label]

    @property
    def is_synthetic(self) -> bool:
        return self.source.startswith(SYNTHETIC_PREFIX)

    @property
    def synthetic_seed(self) -> int:
        if not self.is_synthetic:
            raise ValueError(f"{self.id}: source is not synthetic")
        return int(self.source[len(SYNTHETIC_PREFIX) :])


@dataclass
class VideoManifest:
    entries: list[ManifestEntry] = field(default_factory=list)
    schema_version: int = SCHEMA_VERSION

    def __len__(self) -> int:
        return len(self.entries)

    def ids(self) -> list[str]:
        return [e.id for e in self.entries]

    def label_counts(self) -> dict[str, int]:
        counts = {"real": 0, "fake": 0}
        for e in self.entries:
            counts[e.label] += 1
        return counts

    def validate(self) -> None:
        seen: set[str] = set()
        for e in self.entries:
            if e.id in seen:
                raise ManifestError(f"duplicate id {e.id!r}")
            seen.add(e.id)
            if e.label not in LABELS:
                raise ManifestError(f"{e.id}: unknown label {e.label!r}")
            if not e.source:
                raise ManifestError(f"{e.id}: empty source")
            if e.is_synthetic:
                try:
                    e.synthetic_seed
                except ValueError as exc:
                    raise ManifestError(f"{e.id}: bad synthetic seed") from exc
                if e.frame_count is None:
                    raise ManifestError(f"{e.id}: synthetic source requires frame_count")
            if e.frame_count is not None and e.frame_count <= 0:
                raise ManifestError(f"{e.id}: frame_count must be positive")


def load_manifest(path: str | Path) -> VideoManifest:
    """Parse a manifest file.

    Format: a `schema_version=1` header, then one tab-separated record per
    line with fields id, label, generator, source and an optional trailing
    frame_count. Blank lines and `#` comments are skipped.
    """
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    entries: list[ManifestEntry] = []
    header_seen = False
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if not header_seen:
            if line != f"schema_version={SCHEMA_VERSION}":
                raise ManifestError(
                    f"{path}:{lineno}: expected schema_version={SCHEMA_VERSION} header"
                )
            header_seen = True
            continue
        fields = line.split("\t")
        if len(fields) not in (4, 5):
            raise ManifestError(
                f"{path}:{lineno}: expected 4 or 5 tab-separated fields, got {len(fields)}"
            )
        frame_count = None
        if len(fields) == 5:
            try:
                frame_count = int(fields[4])
            except ValueError:
                raise ManifestError(f"{path}:{lineno}: frame_count is not an integer")
        entry = ManifestEntry(
            id=fields[0], label=fields[1], generator=fields[2], source=fields[3],
            frame_count=frame_count,
        )
        if entry.label not in LABELS:
            raise ManifestError(f"{path}:{lineno}: unknown label {entry.label!r}")
        entries.append(entry)
    if not entries:
        raise ManifestError(f"{path}: no entries")
    manifest = VideoManifest(entries=entries)
    manifest.validate()
    return manifest


def save_manifest(manifest: VideoManifest, path: str | Path) -> None:
    lines = [f"schema_version={manifest.schema_version}"]
    for e in manifest.entries:
        fields = [e.id, e.label, e.generator, e.source]
        if e.frame_count is not None:
            fields.append(str(e.frame_count))
        lines.append("\t".join(fields))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def split_holdout(
    manifest: VideoManifest, fraction: float, seed: int
) -> tuple[VideoManifest, VideoManifest]:
    """Deterministic stratified split; returns (train, holdout).

    The holdout gets round(fraction * N) entries, allocated across labels by
    largest remainder so tiny runs never lose a class.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must be in (0, 1)")
    counts = manifest.label_counts()
    for lbl, n in counts.items():
        if n < 2:
            raise ManifestError(f"need at least 2 {lbl!r} entries to split, got {n}")
    n_total = len(manifest)
    n_val = int(round(fraction * n_total))
    if n_val == 0 or n_val == n_total:
        raise ManifestError(f"fraction {fraction} yields an empty split for {n_total} entries")

    labels = sorted(counts)
    quotas = {lbl: n_val * counts[lbl] / n_total for lbl in labels}
    alloc = {lbl: int(np.floor(quotas[lbl])) for lbl in labels}
    remainder = n_val - sum(alloc.values())
    for lbl in sorted(labels, key=lambda c: (quotas[c] - alloc[c], c), reverse=True):
        if remainder == 0:
            break
        alloc[lbl] += 1
        remainder -= 1
    # keep both labels represented on both sides whenever counts permit
    for lbl in labels:
        other = [c for c in labels if c != lbl]
        if alloc[lbl] == 0 and counts[lbl] >= 2:
            donor = max(other, key=lambda c: alloc[c])
            if alloc[donor] > 1:
                alloc[donor] -= 1
                alloc[lbl] += 1
        if alloc[lbl] == counts[lbl]:
            alloc[lbl] -= 1
            receiver = max(other, key=lambda c: counts[c] - alloc[c])
            alloc[receiver] += 1

    rng = np.random.Generator(np.random.PCG64(seed))
    holdout_ids: set[str] = set()
    for lbl in labels:
        members = [e.id for e in manifest.entries if e.label == lbl]
        perm = rng.permutation(len(members))
        holdout_ids.update(members[i] for i in perm[: alloc[lbl]])

    train = VideoManifest([e for e in manifest.entries if e.id not in holdout_ids])
    holdout = VideoManifest([e for e in manifest.entries if e.id in holdout_ids])
    return train, holdout


@dataclass
class FrameBatch:
    """T decoded frames, shape (T, 224, 224, 3), float32 pixels in [0, 1]."""

    pixels: torch.Tensor
    indices: list[int]
    video_id: str

    def clone(self) -> "FrameBatch":
        return FrameBatch(self.pixels.clone(), list(self.indices), self.video_id)


def _center_crop(frame: np.ndarray) -> np.ndarray:
    h, w = frame.shape[:2]
    top = (h - FRAME_SIZE) // 2
    left = (w - FRAME_SIZE) // 2
    return frame[top : top + FRAME_SIZE, left : left + FRAME_SIZE]


def probe_frame_count(entry: ManifestEntry) -> int:
    if entry.is_synthetic:
        return entry.frame_count  # validated to be present
    if entry.frame_count is not None:
        return entry.frame_count
    import cv2

    cap = cv2.VideoCapture(entry.source)
    if not cap.isOpened():
        raise DecodeError(f"{entry.id}: cannot open {entry.source!r}")
    count = int(cap.get(cv2.CAP_PROP_FRAME_COUNT))
    cap.release()
    if count <= 0:
        raise DecodeError(f"{entry.id}: cannot determine frame count of {entry.source!r}")
    return count


def decode_frames(entry: ManifestEntry, indices: list[int]) -> FrameBatch:
    """Decode the requested source frames, resized to 256 then center-cropped to 224."""
    frame_count = probe_frame_count(entry)
    for idx in indices:
        if not 0 <= idx < frame_count:
            raise DecodeError(
                f"{entry.id}: frame index {idx} out of range (frame count {frame_count})"
            )
    if entry.is_synthetic:
        seed = entry.synthetic_seed
        unique = {
            u: _center_crop(synthvid.render_frame(seed, entry.label, u, frame_count))
            for u in sorted(set(indices))
        }
        frames = np.stack([unique[u] for u in indices])
    else:
        frames = _decode_media(entry, indices)
    pixels = torch.from_numpy(np.ascontiguousarray(frames, dtype=np.float32))
    return FrameBatch(pixels=pixels, indices=list(indices), video_id=entry.id)


def _decode_media(entry: ManifestEntry, indices: list[int]) -> np.ndarray:
    import cv2

    wanted = set(indices)
    cap = cv2.VideoCapture(entry.source)
    if not cap.isOpened():
        raise DecodeError(f"{entry.id}: cannot open {entry.source!r}")
    decoded: dict[int, np.ndarray] = {}
    pos = 0
    try:
        while len(decoded) < len(wanted):
            ok, frame = cap.read()
            if not ok:
                break
            if pos in wanted:
                frame = cv2.cvtColor(frame, cv2.COLOR_BGR2RGB)
                frame = cv2.resize(frame, (RESIZE_SIZE, RESIZE_SIZE), interpolation=cv2.INTER_AREA)
                decoded[pos] = _center_crop(frame.astype(np.float32) / 255.0)
            pos += 1
    finally:
        cap.release()
    missing = wanted - set(decoded)
    if missing:
        raise DecodeError(f"{entry.id}: could not decode frames {sorted(missing)}")
    return np.stack([decoded[u] for u in indices])
