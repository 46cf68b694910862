import math

import numpy as np
import pytest
import torch

from mmvfd.backbones import ModalityFeatures
from mmvfd.fusion import (
    CrossAttention,
    ModelConfig,
    TemporalEncoder,
    build_model,
    fuse,
    stack_features,
)


def random_features(seed, t=16, video_id="v"):
    rng = np.random.default_rng(seed)
    return ModalityFeatures.from_tokens(
        torch.from_numpy(rng.standard_normal((t, 512))).float(),
        torch.from_numpy(rng.standard_normal((t, 128))).float(),
        torch.from_numpy(rng.standard_normal((1, 768))).float(),
        video_id,
    )


@pytest.fixture(scope="module")
def model():
    return build_model(ModelConfig(), seed=0).eval()


class TestModelConfig:
    def test_classifier_width_invariant(self):
        with pytest.raises(ValueError, match="3\\*d"):
            ModelConfig(d=128).validate()

    def test_head_divisibility(self):
        with pytest.raises(ValueError, match="divisible"):
            ModelConfig(d=250, heads=8, classifier_widths=(750, 512, 256, 1)).validate()

    def test_kv_mode(self):
        with pytest.raises(ValueError):
            ModelConfig(kv_mode="both").validate()


class TestProject:
    def test_identity_weights(self, model):
        cfg = ModelConfig(
            d=256, d_app=256, classifier_widths=(768, 512, 256, 1)
        )
        m = build_model(cfg, seed=0)
        with torch.no_grad():
            m.proj_app.weight.copy_(torch.eye(256))
            m.proj_app.bias.zero_()
        x = torch.randn(16, 256)
        assert torch.allclose(m.project(x, "app"), x, atol=1e-7)

    def test_zero_weights(self, model):
        m = build_model(ModelConfig(), seed=0)
        with torch.no_grad():
            m.proj_depth.weight.zero_()
            m.proj_depth.bias.zero_()
        assert torch.equal(m.project(torch.randn(16, 128), "depth"), torch.zeros(16, 256))

    def test_matches_naive_matmul(self, model):
        x = torch.from_numpy(np.random.default_rng(1).standard_normal((16, 512))).float()
        out = model.project(x, "app")
        w = model.proj_app.weight.detach().numpy().astype(np.float64)
        b = model.proj_app.bias.detach().numpy().astype(np.float64)
        naive = np.stack([w @ row + b for row in x.numpy().astype(np.float64)])
        assert np.abs(out.detach().numpy() - naive).max() < 1e-6

    def test_width_mismatch(self, model):
        with pytest.raises(ValueError, match="width"):
            model.project(torch.randn(16, 100), "app")


class TestTemporalEncoder:
    def test_output_shape(self, model):
        out = model.temporal(torch.randn(16, 256))
        assert out.shape == (16, 256)

    def test_not_permutation_equivariant(self, model):
        x = torch.from_numpy(np.random.default_rng(2).standard_normal((16, 256))).float()
        perm = torch.randperm(16, generator=torch.Generator().manual_seed(3))
        with torch.no_grad():
            out = model.temporal(x)
            out_perm = model.temporal(x[perm])
        assert float((out[perm] - out_perm).norm()) > 1e-6

    def test_zeroed_layer_is_residual_identity(self):
        enc = TemporalEncoder(d=64, t=8, heads=4, layers=1)
        with torch.no_grad():
            enc.pos_embed.zero_()
            layer = enc.encoder.layers[0]
            layer.self_attn.out_proj.weight.zero_()
            layer.self_attn.out_proj.bias.zero_()
            layer.linear2.weight.zero_()
            layer.linear2.bias.zero_()
        x = torch.randn(8, 64)
        with torch.no_grad():
            out = enc(x)
        assert torch.allclose(out, x, atol=1e-7)

    def test_wrong_length_rejected(self, model):
        with pytest.raises(ValueError, match="frames"):
            model.temporal(torch.randn(12, 256))


class TestCrossAttention:
    def test_single_kv_token_weights_one_output_projected_value(self):
        attn = CrossAttention(d=64, heads=8)
        q = torch.randn(16, 64)
        kv = torch.randn(1, 64)
        with torch.no_grad():
            out, weights = attn(q, kv)
        assert torch.equal(weights, torch.ones(16, 1))
        w = attn.attn
        v = kv @ w.in_proj_weight[128:].T + w.in_proj_bias[128:]
        expected = v @ w.out_proj.weight.T + w.out_proj.bias
        assert torch.allclose(out, expected.expand(16, -1), atol=1e-6)

    def test_identical_kv_tokens_uniform_weights(self):
        attn = CrossAttention(d=64, heads=8)
        q = torch.randn(5, 64)
        kv = torch.randn(1, 64).repeat(6, 1)
        with torch.no_grad():
            _, weights = attn(q, kv)
        assert torch.allclose(weights, torch.full((5, 6), 1 / 6), atol=1e-6)

    def test_hand_computed_scalar_case(self):
        # T=1, K=2, d=1, one head: softmax(q*k_i / sqrt(1)) * v_i
        attn = CrossAttention(d=1, heads=1).double()
        with torch.no_grad():
            attn.attn.in_proj_weight.copy_(
                torch.tensor([[2.0], [-1.5], [0.7]], dtype=torch.float64)
            )
            attn.attn.in_proj_bias.zero_()
            attn.attn.out_proj.weight.fill_(1.0)
            attn.attn.out_proj.bias.zero_()
        x_q = torch.tensor([[0.9]], dtype=torch.float64)
        x_kv = torch.tensor([[0.4], [-1.1]], dtype=torch.float64)
        with torch.no_grad():
            out, weights = attn(x_q, x_kv)
        q = 2.0 * 0.9
        logits = [q * (-1.5 * 0.4), q * (-1.5 * -1.1)]
        exp = [math.exp(v) for v in logits]
        alphas = [e / sum(exp) for e in exp]
        expected = alphas[0] * (0.7 * 0.4) + alphas[1] * (0.7 * -1.1)
        assert abs(float(out[0, 0]) - expected) < 1e-9
        assert abs(float(weights[0, 0]) - alphas[0]) < 1e-9

    def test_row_stochastic(self):
        attn = CrossAttention(d=128, heads=8)
        with torch.no_grad():
            _, weights = attn(torch.randn(16, 128), torch.randn(9, 128))
        assert torch.allclose(weights.sum(dim=-1), torch.ones(16), atol=1e-5)

    def test_width_mismatch(self):
        attn = CrossAttention(d=64, heads=8)
        with pytest.raises(ValueError):
            attn(torch.randn(4, 64), torch.randn(3, 32))


class TestFuse:
    def test_zero_inputs(self):
        z = fuse(torch.zeros(16, 256), torch.zeros(16, 256), torch.zeros(16, 256))
        assert torch.equal(z, torch.zeros(768))

    def test_constant_streams_concatenate(self):
        a = torch.full((16, 4), 2.0)
        b = torch.full((16, 4), -1.0)
        c = torch.full((16, 4), 0.5)
        z = fuse(a, b, c)
        expected = torch.cat([torch.full((4,), 2.0), torch.full((4,), -1.0), torch.full((4,), 0.5)])
        assert torch.allclose(z, expected, atol=1e-7)

    def test_against_mean_then_concat_oracle(self):
        rng = np.random.default_rng(3)
        parts = [rng.standard_normal((16, 256)) for _ in range(3)]
        z = fuse(*(torch.from_numpy(p).float() for p in parts))
        oracle = np.concatenate([p.mean(axis=0) for p in parts])
        assert np.abs(z.numpy() - oracle).max() < 1e-6


class TestClassifier:
    def test_zero_final_layer_gives_half(self, model):
        m = build_model(ModelConfig(), seed=1).eval()
        with torch.no_grad():
            m.classifier.net[-1].weight.zero_()
            m.classifier.net[-1].bias.zero_()
            p = m.classifier(torch.randn(768))
        assert float(p) == 0.5

    def test_terminal_stage_monotone(self):
        m = build_model(ModelConfig(), seed=1).eval()
        z = torch.randn(768)
        probs = []
        for bias in (-2.0, -1.0, 0.0, 1.0, 2.0):
            with torch.no_grad():
                m.classifier.net[-1].bias.fill_(bias)
                probs.append(float(m.classifier(z)))
        assert all(b > a for a, b in zip(probs, probs[1:]))

    def test_open_unit_interval(self, model):
        for seed in range(5):
            z = torch.from_numpy(np.random.default_rng(seed).standard_normal(768) * 50).float()
            with torch.no_grad():
                p = float(model.classifier(z))
            assert 0.0 < p < 1.0


class TestForward:
    def test_eval_forward_deterministic(self, model):
        feats = random_features(0)
        a1 = model.forward_features(feats)
        a2 = model.forward_features(feats)
        assert torch.equal(a1.p, a2.p)
        assert torch.equal(a1.z, a2.z)
        assert torch.equal(a1.attn_depth, a2.attn_depth)

    def test_activation_shapes(self, model):
        acts = model.forward_features([random_features(i) for i in range(3)])
        assert acts.h_app.shape == (3, 16, 256)
        assert acts.h_app_temp.shape == (3, 16, 256)
        assert acts.h_app_motion.shape == (3, 16, 256)
        assert acts.h_app_depth.shape == (3, 16, 256)
        assert acts.attn_motion.shape == (3, 16, 1)
        assert acts.attn_depth.shape == (3, 16, 16)
        assert acts.z.shape == (3, 768)
        assert acts.p.shape == (3,)
        assert len(acts.video(1)) == 1

    def test_attention_rows_stochastic(self, model):
        acts = model.forward_features([random_features(i) for i in range(8)])
        for attn in (acts.attn_motion, acts.attn_depth):
            sums = attn.sum(dim=-1)
            assert torch.allclose(sums, torch.ones_like(sums), atol=1e-5)

    def test_pooled_kv_mode_degenerate_weights(self):
        m = build_model(ModelConfig(kv_mode="pooled"), seed=0).eval()
        acts = m.forward_features(random_features(4))
        assert acts.attn_motion.shape == (1, 16, 1)
        assert acts.attn_depth.shape == (1, 16, 1)
        assert torch.equal(acts.attn_motion, torch.ones(1, 16, 1))
        assert torch.equal(acts.attn_depth, torch.ones(1, 16, 1))

    def test_z_is_fusion_of_streams(self, model):
        acts = model.forward_features(random_features(5))
        expected = fuse(acts.h_app_temp, acts.h_app_motion, acts.h_app_depth)
        assert torch.allclose(acts.z, expected, atol=1e-7)

    def test_query_direction_matters(self, model):
        # swapping which stream queries changes the computation: attend
        # depth->appearance instead of appearance->depth at the same weights
        feats = random_features(6)
        acts = model.forward_features(feats)
        h_app_temp = acts.h_app_temp[0]
        h_depth = acts.h_depth[0]
        with torch.no_grad():
            fwd, _ = model.cross_depth(h_app_temp, h_depth)
            rev, _ = model.cross_depth(h_depth, h_app_temp)
        assert float((fwd - rev).norm()) > 1e-6

    def test_build_model_seeded(self):
        a = build_model(ModelConfig(), seed=11)
        b = build_model(ModelConfig(), seed=11)
        for (_, pa), (_, pb) in zip(a.named_parameters(), b.named_parameters()):
            assert torch.equal(pa, pb)

    def test_stack_features_pooled_mode(self):
        feats = [random_features(i) for i in range(2)]
        app, depth, motion = stack_features(feats, "pooled")
        assert app.shape == (2, 16, 512)
        assert depth.shape == (2, 1, 128)
        assert motion.shape == (2, 1, 768)
