"""Binary tensor container used by the feature cache and checkpoints.

Layout (all integers little-endian):

    magic   b"CVFD"
    version u16
    fingerprint  32 raw bytes (backend / producer identity hash)
    meta_len u32, meta UTF-8 text (canonical key-sorted lines, may be empty)
    tensor_count u32
    per tensor: name_len u16, name UTF-8, rank u32, dims u32 each,
                float32 little-endian data in C order
    crc u32  (CRC32 of every preceding byte)

Tensors are written in sorted name order so a write -> read -> write cycle is
byte-identical.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"CVFD"
VERSION = 1
FINGERPRINT_BYTES = 32


class ContainerError(Exception):
    """Raised when a container file is malformed or fails its checksum."""


@dataclass
class Container:
    fingerprint: bytes
    meta: str = ""
    tensors: dict[str, np.ndarray] = field(default_factory=dict)


def write_container(
    path: str | Path,
    fingerprint: bytes,
    tensors: dict[str, np.ndarray],
    meta: str = "",
) -> None:
    if len(fingerprint) != FINGERPRINT_BYTES:
        raise ValueError(f"fingerprint must be {FINGERPRINT_BYTES} bytes")
    parts = [MAGIC, struct.pack("<H", VERSION), fingerprint]
    meta_bytes = meta.encode("utf-8")
    parts.append(struct.pack("<I", len(meta_bytes)))
    parts.append(meta_bytes)
    parts.append(struct.pack("<I", len(tensors)))
    for name in sorted(tensors):
        arr = np.asarray(tensors[name], dtype=np.float32)
        name_bytes = name.encode("utf-8")
        parts.append(struct.pack("<H", len(name_bytes)))
        parts.append(name_bytes)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape) if arr.ndim else b"")
        parts.append(arr.astype("<f4").tobytes(order="C"))
    payload = b"".join(parts)
    blob = payload + struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF)
    tmp = Path(path).with_suffix(Path(path).suffix + ".tmp")
    tmp.write_bytes(blob)
    tmp.replace(path)


def read_container(path: str | Path) -> Container:
    blob = Path(path).read_bytes()
    if len(blob) < len(MAGIC) + 2 + FINGERPRINT_BYTES + 4 + 4 + 4:
        raise ContainerError(f"{path}: truncated container")
    payload, crc_bytes = blob[:-4], blob[-4:]
    (crc_stored,) = struct.unpack("<I", crc_bytes)
    if zlib.crc32(payload) & 0xFFFFFFFF != crc_stored:
        raise ContainerError(f"{path}: CRC mismatch")
    off = 0
    if payload[:4] != MAGIC:
        raise ContainerError(f"{path}: bad magic")
    off += 4
    (version,) = struct.unpack_from("<H", payload, off)
    off += 2
    if version != VERSION:
        raise ContainerError(f"{path}: unsupported version {version}")
    fingerprint = payload[off : off + FINGERPRINT_BYTES]
    off += FINGERPRINT_BYTES
    (meta_len,) = struct.unpack_from("<I", payload, off)
    off += 4
    meta = payload[off : off + meta_len].decode("utf-8")
    off += meta_len
    (count,) = struct.unpack_from("<I", payload, off)
    off += 4
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", payload, off)
        off += 2
        name = payload[off : off + name_len].decode("utf-8")
        off += name_len
        (rank,) = struct.unpack_from("<I", payload, off)
        off += 4
        dims = struct.unpack_from(f"<{rank}I", payload, off) if rank else ()
        off += 4 * rank
        n = int(np.prod(dims)) if rank else 1
        data = np.frombuffer(payload, dtype="<f4", count=n, offset=off)
        off += 4 * n
        tensors[name] = data.reshape(dims).copy()
    if off != len(payload):
        raise ContainerError(f"{path}: trailing bytes after tensor blocks")
    return Container(fingerprint=fingerprint, meta=meta, tensors=tensors)
