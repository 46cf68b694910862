import logging

import numpy as np
import pytest
import torch

from mmvfd.backbones import (
    BackendSpec,
    BackendUnavailableError,
    DepthNet,
    FeatureCache,
    PretrainedBackend,
    SyntheticBackend,
    normalize_depth_map,
    partition_clips,
    pool_tokens,
)
from mmvfd.ingest import ManifestEntry, decode_frames
from mmvfd.tensorio import read_container, write_container

from conftest import synthetic_manifest


def batch_for(seed=1, label="real", indices=None, frame_count=48):
    entry = ManifestEntry("x", label, "g", f"synthetic:{seed}", frame_count)
    return decode_frames(entry, indices if indices is not None else list(range(16)))


class TestBackendSpec:
    def test_pretrained_requires_ids(self):
        with pytest.raises(ValueError, match="identifiers"):
            BackendSpec(kind="pretrained").validate()

    def test_separability_domain(self):
        with pytest.raises(ValueError):
            BackendSpec(kind="synthetic", separability=1.5).validate()

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            BackendSpec(kind="magic").validate()


class TestPoolTokens:
    def test_single_row_identity(self):
        row = torch.randn(1, 7)
        assert torch.equal(pool_tokens(row), row[0])

    def test_two_scalars(self):
        assert float(pool_tokens(torch.tensor([[1.0], [3.0]]))) == 2.0

    def test_matches_summation_oracle(self):
        tokens = torch.from_numpy(np.random.default_rng(0).standard_normal((16, 512))).float()
        pooled = pool_tokens(tokens)
        oracle = torch.zeros(512, dtype=torch.float64)
        for row in tokens:
            oracle += row.double()
        oracle /= 16
        assert torch.allclose(pooled.double(), oracle, atol=1e-7)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            pool_tokens(torch.zeros(0, 4))


class TestPartitionClips:
    def test_single_clip(self):
        assert partition_clips(16, 16) == [list(range(16))]

    def test_two_clips_cover(self):
        clips = partition_clips(32, 16)
        assert clips == [list(range(16)), list(range(16, 32))]

    def test_cyclic_padding(self):
        clips = partition_clips(20, 16)
        assert len(clips) == 2
        assert clips[1] == [(16 + i) % 20 for i in range(16)]


class TestSyntheticExtractors:
    def test_shapes(self, backend):
        feats = backend.extract(batch_for())
        assert feats.appearance_tokens.shape == (16, 512)
        assert feats.depth_tokens.shape == (16, 128)
        assert feats.motion_tokens.shape == (1, 768)
        feats.validate()

    def test_identical_frames_identical_rows(self, backend):
        batch = batch_for(indices=[4] * 16)
        tokens = backend.extract_appearance(batch)
        for k in range(1, 16):
            assert torch.equal(tokens[0], tokens[k])

    def test_bit_identical_across_runs(self, backend):
        f1 = backend.extract(batch_for(seed=9))
        f2 = backend.extract(batch_for(seed=9))
        assert torch.equal(f1.appearance_tokens, f2.appearance_tokens)
        assert torch.equal(f1.depth_tokens, f2.depth_tokens)
        assert torch.equal(f1.motion_tokens, f2.motion_tokens)

    def test_motion_two_clips_for_t32(self, backend):
        batch = batch_for(indices=list(range(32)))
        assert backend.extract_motion(batch).shape == (2, 768)

    def test_static_video_hits_zero_motion_signature(self, backend):
        batch = batch_for(indices=[7] * 16)
        tokens = backend.extract_motion(batch)
        assert torch.equal(tokens[0], backend.zero_motion_signature())

    def test_all_finite(self, backend):
        for seed, label in ((3, "real"), (3, "fake")):
            feats = backend.extract(batch_for(seed=seed, label=label))
            for t in (feats.appearance_tokens, feats.depth_tokens, feats.motion_tokens):
                assert torch.isfinite(t).all()

    def test_pooled_fields_are_row_means(self, backend):
        feats = backend.extract(batch_for(seed=5, label="fake"))
        assert torch.allclose(feats.pooled_depth, feats.depth_tokens.mean(dim=0), atol=1e-6)
        assert torch.allclose(
            feats.pooled_appearance, feats.appearance_tokens.mean(dim=0), atol=1e-6
        )

    def test_differentiable_wrt_pixels(self, backend):
        batch = batch_for(seed=2)
        batch.pixels.requires_grad_(True)
        out = backend.extract_depth(batch).sum() + backend.extract_motion(batch).sum()
        out.backward()
        assert batch.pixels.grad is not None
        assert torch.isfinite(batch.pixels.grad).all()


def _residual_of_linear_fit(backend, manifest):
    """Relative residual of the best linear map appearance -> depth tokens.

    Tokens live in a low-dimensional subspace, so the fit is restricted to
    well-conditioned directions (rcond) to avoid interpolating float noise.
    """
    apps, depths = [], []
    for entry in manifest.entries:
        batch = decode_frames(entry, list(range(16)))
        apps.append(backend.extract_appearance(batch).numpy())
        depths.append(backend.extract_depth(batch).numpy())
    a = np.concatenate(apps).astype(np.float64)
    d = np.concatenate(depths).astype(np.float64)
    coef, *_ = np.linalg.lstsq(a, d, rcond=1e-6)
    resid = d - a @ coef
    return float(np.linalg.norm(resid) / np.linalg.norm(d))


class TestSyntheticContract:
    """Real videos draw all modalities from one shared latent; fakes mix in
    independent latents with strength `separability`."""

    def test_real_depth_is_linear_in_appearance_fake_is_not(self):
        backend = SyntheticBackend(BackendSpec(kind="synthetic", separability=0.8))
        with torch.no_grad():
            r_real = _residual_of_linear_fit(backend, synthetic_manifest(30, 0, seed0=100))
            r_fake = _residual_of_linear_fit(backend, synthetic_manifest(0, 30, seed0=100))
        assert r_real < 0.2
        assert r_fake > 2 * r_real

    def test_zero_separability_removes_the_contradiction(self):
        backend = SyntheticBackend(BackendSpec(kind="synthetic", separability=0.0))
        with torch.no_grad():
            r_fake = _residual_of_linear_fit(backend, synthetic_manifest(0, 30, seed0=200))
        assert r_fake < 0.2

    def test_separability_changes_fingerprint(self):
        a = SyntheticBackend(BackendSpec(kind="synthetic", separability=0.8))
        b = SyntheticBackend(BackendSpec(kind="synthetic", separability=0.5))
        assert a.fingerprint != b.fingerprint


class TestDepthPipeline:
    def test_constant_map_normalizes_to_zero(self):
        out = normalize_depth_map(torch.full((32, 32), 3.25))
        assert torch.equal(out, torch.zeros(32, 32))

    def test_normalized_moments(self):
        maps = torch.from_numpy(np.random.default_rng(0).standard_normal((4, 64, 64))).float()
        out = normalize_depth_map(maps * 7.0 + 3.0)
        for k in range(4):
            assert abs(float(out[k].mean())) < 1e-4
            assert abs(float(out[k].std(unbiased=False)) - 1.0) < 1e-4

    def test_depthnet_output_shape(self):
        net = DepthNet().eval()
        maps = torch.randn(16, 224, 224)
        with torch.no_grad():
            tokens = net(normalize_depth_map(maps))
        assert tokens.shape == (16, 128)
        assert torch.isfinite(tokens).all()

    def test_depthnet_seeded_init_is_deterministic(self):
        a, b = DepthNet(init_seed=4), DepthNet(init_seed=4)
        for (_, pa), (_, pb) in zip(a.named_parameters(), b.named_parameters()):
            assert torch.equal(pa, pb)


class TestPretrainedBackend:
    def test_unavailable_raises_with_remediation(self):
        spec = BackendSpec(
            kind="pretrained",
            appearance_id="nonexistent/clip-model",
            depth_id="nonexistent/depth-model",
            motion_id="nonexistent/motion-model",
        )
        backend = PretrainedBackend(spec)
        with pytest.raises(BackendUnavailableError, match="synthetic"):
            backend.extract_appearance(batch_for())


class TestFeatureCache:
    def test_store_load_bit_exact(self, tmp_path, backend):
        cache = FeatureCache(tmp_path, backend.fingerprint)
        feats = backend.extract(batch_for(seed=21))
        cache.store(feats)
        loaded = cache.load("x", 16)
        assert loaded is not None
        for name in ("appearance_tokens", "depth_tokens", "motion_tokens"):
            assert torch.equal(getattr(loaded, name), getattr(feats, name))

    def test_wrong_fingerprint_is_miss(self, tmp_path, backend):
        cache = FeatureCache(tmp_path, backend.fingerprint)
        cache.store(backend.extract(batch_for(seed=21)))
        other = FeatureCache(tmp_path, b"\x00" * 32)
        assert other.load("x", 16) is None

    def test_wrong_t_is_miss(self, tmp_path, backend):
        cache = FeatureCache(tmp_path, backend.fingerprint)
        cache.store(backend.extract(batch_for(seed=21)))
        assert cache.load("x", 8) is None

    def test_corrupted_file_is_miss_with_warning(self, tmp_path, backend, caplog):
        cache = FeatureCache(tmp_path, backend.fingerprint)
        path = cache.store(backend.extract(batch_for(seed=21)))
        blob = bytearray(path.read_bytes())
        blob[100] ^= 0xFF
        path.write_bytes(bytes(blob))
        with caplog.at_level(logging.WARNING):
            assert cache.load("x", 16) is None
        assert "cache miss" in caplog.text

    def test_cache_file_write_read_write_identical(self, tmp_path, backend):
        cache = FeatureCache(tmp_path, backend.fingerprint)
        path = cache.store(backend.extract(batch_for(seed=22)))
        container = read_container(path)
        copy = tmp_path / "copy.cvfd"
        write_container(copy, container.fingerprint, container.tensors, container.meta)
        assert copy.read_bytes() == path.read_bytes()
