import numpy as np
import pytest

import mart.diffcore as dc
import mart.model.pwt as pwt
from mart.errors import ConfigError, DimensionError
from mart.model import (
    Encoder,
    HierState,
    InteractionUnit,
    MARTModel,
    ProjectionHead,
    channel_plan,
    cross_attend,
    interact,
    pwt_block,
    pwt_stack,
)
from mart.model.encoder import FULL_CHANNELS, padded_size


def t64(a, grad=True):
    return dc.Tensor(np.asarray(a, dtype=np.float64), requires_grad=grad)


def naive_attention(q, k, v, heads):
    """Per-element multi-head attention with explicit loops."""
    nq, d = q.shape
    dh = d // heads
    out = np.zeros((nq, d))
    for h in range(heads):
        sl = slice(h * dh, (h + 1) * dh)
        for i in range(nq):
            s = np.array([np.dot(q[i, sl], k[j, sl]) / np.sqrt(dh) for j in range(k.shape[0])])
            w = np.exp(s - s.max())
            w /= w.sum()
            for j in range(k.shape[0]):
                out[i, sl] += w[j] * v[j, sl]
    return out


def unit64(d_e=8, d_t=6, heads=3, seed=0):
    return InteractionUnit(d_e, d_t, heads, rng=np.random.default_rng(seed), dtype=np.float64)


def state64(rng, B=2, M=2, N=3, d=8):
    return HierState([t64(rng.normal(size=(B * M ** n, d))) for n in range(N)], M)


class TestCrossAttend:
    def test_single_key(self):
        rng = np.random.default_rng(0)
        v = rng.normal(size=(1, 6))
        out = cross_attend(t64(rng.normal(size=(4, 6))), t64(rng.normal(size=(1, 6))), t64(v), 3)
        np.testing.assert_allclose(out.data, np.repeat(v, 4, 0), atol=1e-12)

    def test_identical_keys_average(self):
        rng = np.random.default_rng(1)
        v = rng.normal(size=(3, 6))
        out = cross_attend(t64(rng.normal(size=(2, 6))), t64(np.ones((3, 6))), t64(v), 2)
        np.testing.assert_allclose(out.data, np.repeat(v.mean(0, keepdims=True), 2, 0), atol=1e-12)

    @pytest.mark.parametrize("heads", [1, 2, 3])
    def test_naive_oracle(self, heads):
        rng = np.random.default_rng(heads)
        q, k, v = rng.normal(size=(2, 6)), rng.normal(size=(3, 6)), rng.normal(size=(3, 6))
        out = cross_attend(t64(q), t64(k), t64(v), heads)
        np.testing.assert_allclose(out.data, naive_attention(q, k, v, heads), atol=1e-6)

    def test_grouped_equals_loop(self):
        rng = np.random.default_rng(5)
        q, k, v = rng.normal(size=(4, 2, 6)), rng.normal(size=(4, 3, 6)), rng.normal(size=(4, 3, 6))
        out = cross_attend(t64(q), t64(k), t64(v), 3)
        for g in range(4):
            np.testing.assert_allclose(out.data[g], naive_attention(q[g], k[g], v[g], 3), atol=1e-9)

    def test_shape_errors(self):
        with pytest.raises(DimensionError):
            cross_attend(t64(np.ones((2, 5))), t64(np.ones((3, 5))), t64(np.ones((3, 5))), 3)
        with pytest.raises(DimensionError):
            cross_attend(t64(np.ones((2, 6))), t64(np.ones((3, 6))), t64(np.ones((2, 6))), 3)


class TestInteract:
    def test_zero_lambda_identity(self):
        rng = np.random.default_rng(0)
        w, p = t64(rng.normal(size=(1, 8))), t64(rng.normal(size=(2, 8)))
        wo, po = interact(w, p, unit64(), 0.0, 0.0)
        assert wo is w and po is p

    def test_identical_parts_collapse(self):
        rng = np.random.default_rng(1)
        unit = unit64()
        w, part = t64(rng.normal(size=(1, 8))), rng.normal(size=(1, 8))
        many = unit.whole_update(w, t64(np.repeat(part, 4, 0)), 4)
        one = unit.whole_update(w, t64(part), 1)
        np.testing.assert_allclose(many.data, one.data, atol=1e-12)

    def test_composition_oracle(self):
        rng = np.random.default_rng(2)
        unit = unit64()
        w, p = rng.normal(size=(1, 8)), rng.normal(size=(2, 8))
        U = {n: getattr(unit, n).data for n in unit.NAMES}
        down = naive_attention(w @ U["wq_whole"], p @ U["wk_part"], p @ U["wv_part"], 3) @ U["w_out"]
        up = naive_attention(p @ U["wq_part"], w @ U["wk_whole"], w @ U["wv_whole"], 3) @ U["w_out"]
        wo, po = interact(t64(w), t64(p), unit, 0.7, 0.3)
        np.testing.assert_allclose(wo.data, w + 0.7 * down, atol=1e-6)
        np.testing.assert_allclose(po.data, p + 0.3 * up, atol=1e-6)


class TestPwt:
    def test_zero_lambda_block_is_identity(self):
        st = state64(np.random.default_rng(0))
        out = pwt_block(st, [unit64(seed=i) for i in range(2)], 0.0, 0.0)
        assert all(np.array_equal(a.data, b.data) for a, b in zip(out.levels, st.levels))

    def test_n2_is_one_interact(self):
        rng = np.random.default_rng(1)
        st = state64(rng, B=1, M=3, N=2)
        unit = unit64()
        out = pwt_block(st, [unit])
        wo, po = interact(st.levels[0], st.levels[1], unit)
        np.testing.assert_array_equal(out.levels[0].data, wo.data)
        np.testing.assert_array_equal(out.levels[1].data, po.data)

    def test_batched_equals_sequential(self):
        rng = np.random.default_rng(2)
        B, M, N = 3, 2, 3
        st = state64(rng, B, M, N)
        units = [unit64(seed=i) for i in range(N - 1)]
        out = pwt_block(st, units, 0.8, 0.6)
        lv = [s.data for s in st.levels]
        ref = [x.copy() for x in lv]
        for n, unit in enumerate(units):
            for r in range(lv[n].shape[0]):
                kids = slice(r * M, (r + 1) * M)
                wo, po = interact(t64(lv[n][r:r + 1]), t64(lv[n + 1][kids]), unit, 0.8, 0.6)
                ref[n][r] += wo.data[0] - lv[n][r]
                ref[n + 1][kids] += po.data - lv[n + 1][kids]
        for a, b in zip(out.levels, ref):
            np.testing.assert_allclose(a.data, b, atol=1e-6)

    def test_per_level_lambdas(self):
        st = state64(np.random.default_rng(3))
        units = [unit64(seed=i) for i in range(2)]
        out = pwt_block(st, units, [0.0, 0.0, 0.0], [0.0, 0.0, 1.0])
        # only the leaves receive a term
        assert np.array_equal(out.levels[0].data, st.levels[0].data)
        assert np.array_equal(out.levels[1].data, st.levels[1].data)
        assert not np.array_equal(out.levels[2].data, st.levels[2].data)
        with pytest.raises(ConfigError):
            pwt_block(st, units, [1.0, 1.0])

    def test_stack(self):
        st = state64(np.random.default_rng(4))
        blocks = [[unit64(seed=2 * b + i) for i in range(2)] for b in range(3)]
        one = pwt_stack(st, blocks[:1])
        ref = pwt_block(st, blocks[0])
        assert all(np.array_equal(a.data, b.data) for a, b in zip(one.levels, ref.levels))
        zero = pwt_stack(st, blocks, 0.0, 0.0)
        assert all(np.array_equal(a.data, b.data) for a, b in zip(zero.levels, st.levels))
        with pytest.raises(ConfigError):
            pwt_stack(st, [])

    def test_zero_lambda_never_attends(self):
        pwt.reset_attention_counter()
        pwt_stack(state64(np.random.default_rng(5)), [[unit64(), unit64(seed=1)]], 0.0, 0.0)
        assert pwt.attention_calls == 0

    def test_stack_gradient(self):
        rng = np.random.default_rng(6)
        st = state64(rng, B=1, M=2, N=3, d=8)
        blocks = [[unit64(seed=2 * b + i) for i in range(2)] for b in range(3)]
        params = list(st.levels) + [p for units in blocks for u in units for _, p in u.named_parameters()]
        target = rng.normal(size=(1, 8))

        def f():
            out = pwt_stack(st, blocks)
            return dc.sum(out.levels[0] * t64(target, grad=False)) + dc.sum(out.levels[2] * out.levels[2])

        rep = dc.grad_check(f, params, max_coords=10)
        assert rep.passed, rep.worst

    def test_validate(self):
        with pytest.raises(ConfigError):
            HierState([t64(np.ones((2, 4))), t64(np.ones((3, 4)))], 2).validate()


class TestHead:
    def test_shape_and_zero(self):
        head = ProjectionHead(rng=np.random.default_rng(0), dtype=np.float64)
        assert head(t64(np.ones(512))).shape == (256,)
        for _, p in head.named_parameters():
            p.data[...] = 0
        assert np.all(head(t64(np.ones((3, 512)))).data == 0)

    def test_width_error(self):
        with pytest.raises(DimensionError):
            ProjectionHead(8, 8, 4)(t64(np.ones(7)))

    def test_gradient(self):
        head = ProjectionHead(6, 5, 4, rng=np.random.default_rng(1), dtype=np.float64)
        x = t64(np.random.default_rng(2).normal(size=(3, 6)))
        params = [x] + [p for _, p in head.named_parameters()]
        rep = dc.grad_check(lambda: dc.sum(head(x) * head(x)), params, kink_guard=True)
        assert rep.passed, rep.worst


class TestEncoder:
    def test_full_plan_output_width(self):
        enc = Encoder(FULL_CHANNELS, rng=np.random.default_rng(0))
        spec = np.random.default_rng(1).normal(size=(128, 128))
        assert enc(spec).shape == (1, 512)

    def test_channel_plan(self):
        assert channel_plan(512) == FULL_CHANNELS
        plan = channel_plan(64)
        assert len(plan) == 7 and plan[-1] == 64 and min(plan) >= 4

    def test_padding(self):
        assert padded_size(128, 7) == 128 and padded_size(32, 7) == 32
        assert padded_size(20, 7) == 32 and padded_size(130, 7) == 256

    def test_deterministic_eval(self):
        enc = Encoder((4, 8), rng=np.random.default_rng(2), dtype=np.float64)
        s = np.random.default_rng(3).normal(size=(16, 12))
        out = enc([s, s.copy()]).data
        assert np.array_equal(out[0], out[1])

    def test_training_updates_running_stats(self):
        enc = Encoder((4,), rng=np.random.default_rng(4), dtype=np.float64)
        enc(np.random.default_rng(5).normal(3.0, 1.0, size=(4, 8, 8)), training=True)
        assert not np.allclose(enc.running_means[0], 0)

    def test_gradient_toy(self):
        enc = Encoder((3, 4), rng=np.random.default_rng(6), dtype=np.float64)
        x = np.random.default_rng(7).normal(size=(3, 8, 8))
        params = dict(enc.named_parameters())
        rep = dc.grad_check(lambda: dc.sum(enc(x, training=True) ** 2) if False else
                            dc.sum(enc(x, training=True) * enc(x, training=True)),
                            params, kink_guard=True)
        assert rep.passed, (rep.worst, rep.kinked)

    def test_bad_input(self):
        with pytest.raises(DimensionError):
            Encoder((4,))(np.ones((2, 3, 4, 5)))


class TestMARTModel:
    @pytest.fixture(scope="class")
    def model(self):
        return MARTModel(M=2, N=3, d_e=8, d_t=6, heads=3, blocks=2, contrastive_dim=5,
                         encoder_channels=(3, 8), seed=0, dtype=np.float64)

    def test_forward_shapes(self, model):
        rng = np.random.default_rng(0)
        specs = [rng.normal(size=(2 * 2 ** n, 16, 8)) for n in range(3)]
        z, zt, post = model.forward(specs, rng.normal(size=(2, 16, 8)))
        assert [a.shape for a in z] == [(2, 5), (4, 5), (8, 5)] and zt.shape == (2, 5)
        assert post.post_interaction
        assert model.embed(specs).shape == (2, 8)

    def test_parameter_names_unique(self, model):
        names = list(model.parameters())
        assert len(names) == len(set(names))
        assert "pwt.block1.unit1.w_out" in names and "head.fc2.bias" in names

    def test_no_pwt_skips_attention(self, model):
        rng = np.random.default_rng(1)
        specs = [rng.normal(size=(2 ** n, 16, 8)) for n in range(3)]
        pwt.reset_attention_counter()
        model.forward(specs, use_pwt=False)
        assert pwt.attention_calls == 0
        model.forward(specs, use_pwt=True)
        assert pwt.attention_calls > 0

    def test_same_seed_same_weights(self):
        a = MARTModel(d_e=8, d_t=6, encoder_channels=(3, 8), seed=5).parameters()
        b = MARTModel(d_e=8, d_t=6, encoder_channels=(3, 8), seed=5).parameters()
        assert all(np.array_equal(a[k].data, b[k].data) for k in a)


def test_small_model_gradient_every_coordinate():
    from mart.checks import model_gradcheck
    from mart.train import TrainConfig

    cfg = TrainConfig(d_e=8, d_t=6, frames=16, N=3, root_seconds=0.4, contrastive_dim=8)
    rep = model_gradcheck(cfg, max_coords=10_000)
    assert rep.checked + len(rep.kinked) == sum(p.data.size for p in MARTModel.from_config(cfg).parameters().values())
    assert rep.passed, (rep.worst, rep.kinked[:3])
