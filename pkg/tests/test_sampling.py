import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from mmvfd.ingest import ManifestEntry, decode_frames
from mmvfd.sampling import AugmentConfig, augment, plan_indices

T = 16


def reference_plan(frame_count, t):
    """Brute-force restatement of the sampling policy, kept independent of
    the implementation."""
    if frame_count < t:
        out = []
        i = 0
        while len(out) < t:
            out.append(i)
            i += 1
            if i == frame_count:
                i = 0
        return out, "short"
    if frame_count < 4 * t:
        first = (t // 2) + (t % 2)
        out = []
        for i in range(first):
            out.append(i)
        for i in range(t - first):
            out.append(frame_count - (t - first) + i)
        return out, "medium"
    weights = [6, 5, 5]
    exact = [t * w / 16 for w in weights]
    sizes = [int(e) for e in exact]
    leftovers = t - sum(sizes)
    by_frac = sorted(range(3), key=lambda i: (exact[i] - sizes[i], -i))
    by_frac.reverse()
    for i in by_frac[:leftovers]:
        sizes[i] += 1
    starts = [0, (frame_count - sizes[1]) // 2, frame_count - sizes[2]]
    out = []
    for s, n in zip(starts, sizes):
        for i in range(n):
            out.append(s + i)
    return out, "long"


class TestPlanIndices:
    def test_exact_length_is_identity(self):
        plan = plan_indices(16, T)
        assert plan.indices == list(range(16))
        assert plan.regime == "medium"

    def test_short_cyclic(self):
        plan = plan_indices(10, T)
        assert plan.indices == [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 0, 1, 2, 3, 4, 5]
        assert plan.regime == "short"

    def test_medium_two_segments(self):
        plan = plan_indices(40, T)
        assert plan.indices == list(range(8)) + list(range(32, 40))
        assert plan.regime == "medium"

    def test_long_655(self):
        plan = plan_indices(1000, T)
        assert plan.indices == list(range(6)) + list(range(497, 502)) + list(range(995, 1000))
        assert plan.regime == "long"

    def test_against_reference_policy_1_to_200(self):
        for frame_count in range(1, 201):
            plan = plan_indices(frame_count, T)
            ref_indices, ref_regime = reference_plan(frame_count, T)
            assert plan.indices == ref_indices, f"frame_count={frame_count}"
            assert plan.regime == ref_regime
            assert len(plan.indices) == T
            assert all(0 <= i < frame_count for i in plan.indices)

    def test_segment_consecutiveness_medium_long(self):
        for frame_count in (16, 17, 40, 63, 64, 100, 1000):
            plan = plan_indices(frame_count, T)
            if plan.regime == "medium":
                first = 8
                segs = [plan.indices[:first], plan.indices[first:]]
            elif plan.regime == "long":
                segs = [plan.indices[:6], plan.indices[6:11], plan.indices[11:]]
            else:
                continue
            for seg in segs:
                assert all(b == a + 1 for a, b in zip(seg, seg[1:]))

    @given(
        frame_count=st.integers(min_value=1, max_value=5000),
        t=st.integers(min_value=1, max_value=64),
    )
    @settings(max_examples=200, deadline=None)
    def test_total_function_properties(self, frame_count, t):
        plan = plan_indices(frame_count, t)
        assert len(plan.indices) == t
        assert all(0 <= i < frame_count for i in plan.indices)
        assert plan.regime in ("short", "medium", "long")

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            plan_indices(0, 16)
        with pytest.raises(ValueError):
            plan_indices(10, 0)


def _batch(seed=3, n=4):
    entry = ManifestEntry("a", "real", "g", f"synthetic:{seed}", 30)
    return decode_frames(entry, list(range(n)))


def _rng(seed=0):
    return np.random.Generator(np.random.PCG64(seed))


class TestAugment:
    def test_disabled_is_identity(self):
        batch = _batch()
        out = augment(batch, AugmentConfig(enabled=False), _rng())
        assert torch.equal(out.pixels, batch.pixels)

    def test_forced_flip_is_exact_mirror(self):
        batch = _batch()
        cfg = AugmentConfig(
            enabled=True, crop_scale=(1.0, 1.0), flip_prob=1.0,
            brightness=0, contrast=0, saturation=0, hue=0,
        )
        out = augment(batch, cfg, _rng())
        assert torch.equal(out.pixels, torch.flip(batch.pixels, dims=[2]))

    def test_brightness_bounded_and_deterministic(self):
        batch = _batch()
        cfg = AugmentConfig(
            enabled=True, crop_scale=(1.0, 1.0), flip_prob=0.0,
            brightness=0.2, contrast=0, saturation=0, hue=0, rng_seed=5,
        )
        out1 = augment(batch, cfg, _rng(5))
        out2 = augment(batch, cfg, _rng(5))
        assert torch.equal(out1.pixels, out2.pixels)
        offset = (out1.pixels - batch.pixels).abs().max()
        assert float(offset) <= 0.2 + 1e-6
        assert float(offset) > 0.0

    def test_same_spatial_transform_for_all_frames(self):
        # a batch of identical frames stays identical across frames after
        # augmentation (per-video, not per-frame, parameters)
        entry = ManifestEntry("a", "real", "g", "synthetic:4", 30)
        batch = decode_frames(entry, [2] * 6)
        cfg = AugmentConfig(enabled=True, rng_seed=0)
        out = augment(batch, cfg, _rng(0))
        for k in range(1, 6):
            assert torch.equal(out.pixels[0], out.pixels[k])

    def test_output_clamped(self):
        batch = _batch()
        cfg = AugmentConfig(enabled=True, brightness=0.9, contrast=0.9, rng_seed=2)
        out = augment(batch, cfg, _rng(2))
        assert float(out.pixels.min()) >= 0.0 and float(out.pixels.max()) <= 1.0

    def test_validation(self):
        with pytest.raises(ValueError):
            AugmentConfig(crop_scale=(0.0, 1.0)).validate()
        with pytest.raises(ValueError):
            AugmentConfig(flip_prob=1.5).validate()
        with pytest.raises(ValueError):
            AugmentConfig(brightness=-0.1).validate()
