import numpy as np
import pytest
import torch

from mmvfd.ingest import (
    DecodeError,
    ManifestEntry,
    ManifestError,
    VideoManifest,
    decode_frames,
    load_manifest,
    save_manifest,
    split_holdout,
)

from conftest import synthetic_manifest


def write_manifest(tmp_path, rows, header="schema_version=1"):
    path = tmp_path / "m.tsv"
    path.write_text("\n".join([header] + rows) + "\n", encoding="utf-8")
    return path


class TestLoadManifest:
    def test_two_rows_in_order(self, tmp_path):
        path = write_manifest(
            tmp_path,
            [
                "a\treal\tcam\tsynthetic:1\t30",
                "b\tfake\tPika\tsynthetic:2\t40",
            ],
        )
        m = load_manifest(path)
        assert [e.id for e in m.entries] == ["a", "b"]
        assert m.entries[0].y == 1 and m.entries[1].y == 0
        assert m.entries[1].generator == "Pika"
        assert m.entries[1].synthetic_seed == 2

    def test_empty_file_is_no_entries(self, tmp_path):
        path = tmp_path / "m.tsv"
        path.write_text("", encoding="utf-8")
        with pytest.raises(ManifestError, match="no entries"):
            load_manifest(path)

    def test_header_only_is_no_entries(self, tmp_path):
        path = write_manifest(tmp_path, [])
        with pytest.raises(ManifestError, match="no entries"):
            load_manifest(path)

    def test_duplicate_ids_named(self, tmp_path):
        path = write_manifest(
            tmp_path,
            ["a\treal\tg\tsynthetic:1\t30", "a\tfake\tg\tsynthetic:2\t30"],
        )
        with pytest.raises(ManifestError, match="'a'"):
            load_manifest(path)

    def test_unknown_label_with_line_number(self, tmp_path):
        path = write_manifest(tmp_path, ["a\tREAL\tg\tsynthetic:1\t30"])
        with pytest.raises(ManifestError, match=":2"):
            load_manifest(path)

    def test_field_count_error_has_line_number(self, tmp_path):
        path = write_manifest(tmp_path, ["a\treal"])
        with pytest.raises(ManifestError, match=":2"):
            load_manifest(path)

    def test_synthetic_requires_frame_count(self, tmp_path):
        path = write_manifest(tmp_path, ["a\treal\tg\tsynthetic:1"])
        with pytest.raises(ManifestError, match="frame_count"):
            load_manifest(path)

    def test_comments_and_blanks_skipped(self, tmp_path):
        path = write_manifest(tmp_path, ["# comment", "", "a\treal\tg\tsynthetic:1\t30"])
        assert len(load_manifest(path)) == 1

    def test_save_round_trip(self, tmp_path):
        m = synthetic_manifest(2, 2)
        path = tmp_path / "out.tsv"
        save_manifest(m, path)
        loaded = load_manifest(path)
        assert loaded.ids() == m.ids()
        save_manifest(loaded, tmp_path / "again.tsv")
        assert (tmp_path / "again.tsv").read_bytes() == path.read_bytes()


class TestSplitHoldout:
    def test_90_10(self):
        m = synthetic_manifest(50, 50)
        train, val = split_holdout(m, 0.10, seed=1)
        assert len(train) == 90 and len(val) == 10

    def test_deterministic(self):
        m = synthetic_manifest(20, 20)
        a = split_holdout(m, 0.2, seed=7)
        b = split_holdout(m, 0.2, seed=7)
        assert a[0].ids() == b[0].ids() and a[1].ids() == b[1].ids()

    def test_partition_by_id_set_algebra(self):
        m = synthetic_manifest(10, 10)
        train, val = split_holdout(m, 0.25, seed=1)
        assert len(train) == 15 and len(val) == 5
        train_ids, val_ids = set(train.ids()), set(val.ids())
        assert train_ids | val_ids == set(m.ids())
        assert train_ids & val_ids == set()

    def test_partition_for_many_seeds(self):
        m = synthetic_manifest(11, 7)
        for seed in range(25):
            train, val = split_holdout(m, 0.3, seed=seed)
            assert sorted(train.ids() + val.ids()) == sorted(m.ids())
            assert not set(train.ids()) & set(val.ids())

    def test_stratified_keeps_both_labels(self):
        m = synthetic_manifest(18, 2)
        for seed in range(10):
            train, val = split_holdout(m, 0.1, seed=seed)
            assert min(train.label_counts().values()) >= 1
            assert min(val.label_counts().values()) >= 1

    def test_empty_split_rejected(self):
        m = synthetic_manifest(2, 2)
        with pytest.raises(ManifestError, match="empty split"):
            split_holdout(m, 0.01, seed=0)

    def test_needs_two_of_each_label(self):
        m = VideoManifest(
            [
                ManifestEntry("a", "real", "g", "synthetic:1", 30),
                ManifestEntry("b", "fake", "g", "synthetic:2", 30),
                ManifestEntry("c", "fake", "g", "synthetic:3", 30),
            ]
        )
        with pytest.raises(ManifestError):
            split_holdout(m, 0.5, seed=0)


class TestDecodeFrames:
    def test_repeated_index_gives_identical_frames(self):
        e = ManifestEntry("a", "real", "g", "synthetic:7", 30)
        batch = decode_frames(e, [0, 0])
        assert torch.equal(batch.pixels[0], batch.pixels[1])

    def test_indices_preserved(self):
        e = ManifestEntry("a", "real", "g", "synthetic:7", 16)
        batch = decode_frames(e, list(range(16)))
        assert batch.indices == list(range(16))
        assert batch.pixels.shape == (16, 224, 224, 3)

    def test_out_of_range_index(self):
        e = ManifestEntry("a", "real", "g", "synthetic:7", 16)
        with pytest.raises(DecodeError, match="out of range"):
            decode_frames(e, [16])

    def test_synthetic_decode_is_pure(self):
        e = ManifestEntry("a", "real", "g", "synthetic:3", 20)
        b1 = decode_frames(e, [0, 5, 19])
        b2 = decode_frames(e, [0, 5, 19])
        assert torch.equal(b1.pixels, b2.pixels)

    def test_pixels_in_unit_range(self):
        e = ManifestEntry("a", "fake", "g", "synthetic:11", 20)
        batch = decode_frames(e, list(range(16)) + [0, 1, 2, 3])
        assert float(batch.pixels.min()) >= 0.0
        assert float(batch.pixels.max()) <= 1.0

    def test_missing_media_file(self):
        e = ManifestEntry("a", "real", "g", "/nonexistent/clip.mp4", 30)
        with pytest.raises(DecodeError):
            decode_frames(e, [0])

    def test_labels_render_differently(self):
        real = decode_frames(ManifestEntry("a", "real", "g", "synthetic:5", 30), [3])
        fake = decode_frames(ManifestEntry("b", "fake", "g", "synthetic:5", 30), [3])
        assert not torch.equal(real.pixels, fake.pixels)


def test_media_decode_round_trip(tmp_path):
    """Write a tiny clip with OpenCV (if an encoder is available) and decode it."""
    cv2 = pytest.importorskip("cv2")
    path = str(tmp_path / "clip.avi")
    writer = cv2.VideoWriter(path, cv2.VideoWriter_fourcc(*"MJPG"), 10, (64, 48))
    if not writer.isOpened():
        pytest.skip("no OpenCV video encoder in this environment")
    rng = np.random.default_rng(0)
    for _ in range(8):
        writer.write(rng.integers(0, 255, size=(48, 64, 3), dtype=np.uint8))
    writer.release()
    e = ManifestEntry("clip", "real", "g", path, None)
    batch = decode_frames(e, [0, 3, 7])
    assert batch.pixels.shape == (3, 224, 224, 3)
    assert 0.0 <= float(batch.pixels.min()) and float(batch.pixels.max()) <= 1.0
