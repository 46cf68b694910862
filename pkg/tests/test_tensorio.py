import numpy as np
import pytest

from mmvfd.tensorio import ContainerError, read_container, write_container

FP = bytes(range(32))


def test_round_trip_bit_exact(tmp_path):
    tensors = {
        "a": np.random.default_rng(0).standard_normal((3, 4)).astype(np.float32),
        "b": np.arange(5, dtype=np.float32),
        "scalar": np.float32(2.5),
    }
    path = tmp_path / "t.cvfd"
    write_container(path, FP, tensors, meta="k=v\n")
    loaded = read_container(path)
    assert loaded.fingerprint == FP
    assert loaded.meta == "k=v\n"
    for name, arr in tensors.items():
        assert np.array_equal(loaded.tensors[name], np.asarray(arr, dtype=np.float32))


def test_write_read_write_byte_identical(tmp_path):
    tensors = {"z": np.ones((2, 2), dtype=np.float32), "a": np.zeros(3, dtype=np.float32)}
    p1, p2 = tmp_path / "one.cvfd", tmp_path / "two.cvfd"
    write_container(p1, FP, tensors, meta="m=1\n")
    loaded = read_container(p1)
    write_container(p2, loaded.fingerprint, loaded.tensors, meta=loaded.meta)
    assert p1.read_bytes() == p2.read_bytes()


def test_crc_detects_corruption(tmp_path):
    path = tmp_path / "t.cvfd"
    write_container(path, FP, {"a": np.ones(4, dtype=np.float32)})
    blob = bytearray(path.read_bytes())
    blob[50] ^= 0xFF
    path.write_bytes(bytes(blob))
    with pytest.raises(ContainerError, match="CRC"):
        read_container(path)


def test_bad_magic(tmp_path):
    path = tmp_path / "t.cvfd"
    path.write_bytes(b"NOPE" + bytes(100))
    with pytest.raises(ContainerError):
        read_container(path)


def test_bad_fingerprint_length(tmp_path):
    with pytest.raises(ValueError):
        write_container(tmp_path / "t.cvfd", b"short", {})
