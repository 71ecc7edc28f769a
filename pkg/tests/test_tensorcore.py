import math

import numpy as np
import pytest

from polarfuse import tensorcore as tc
from polarfuse.errors import ConfigError, ShapeError
from polarfuse.tensorcore import Parameter, backward


class TestBasics:
    def test_linear_identity(self):
        x = tc.constant(np.arange(6.0).reshape(2, 3))
        w = tc.constant(np.eye(3))
        b = tc.constant(np.zeros(3))
        assert np.array_equal(tc.linear(x, w, b).data, x.data)

    def test_linear_example(self):
        x = tc.constant([[1.0, 2.0]])
        w = tc.constant([[1.0], [1.0]])
        b = tc.constant([0.0])
        assert tc.linear(x, w, b).data.tolist() == [[3.0]]

    def test_linear_zero_input_broadcasts_bias(self):
        x = tc.constant(np.zeros((4, 3)))
        w = tc.constant(np.random.default_rng(0).standard_normal((3, 2)))
        b = tc.constant([1.5, -2.0])
        out = tc.linear(x, w, b)
        assert np.allclose(out.data, np.tile([1.5, -2.0], (4, 1)))

    def test_linear_shape_error(self):
        with pytest.raises(ShapeError):
            tc.linear(tc.constant(np.zeros((2, 3))), tc.constant(np.zeros((4, 2))),
                      tc.constant(np.zeros(2)))

    def test_gradients_accumulate_across_backwards(self):
        w = Parameter(np.ones((2, 2)), "w")
        for _ in range(2):
            backward(tc.sum_(tc.matmul(w, w)))
        once = Parameter(np.ones((2, 2)), "w2")
        backward(tc.sum_(tc.matmul(once, once)))
        assert np.allclose(w.grad, 2.0 * once.grad)

    def test_scalar_loss_required(self):
        w = Parameter(np.ones(3), "w")
        with pytest.raises(ValueError):
            backward(tc.mul(w, w))

    def test_unreached_parameter_grad_zero(self):
        used = Parameter(np.ones(2), "used")
        unused = Parameter(np.ones(2), "unused")
        backward(tc.sum_(tc.mul(used, used)))
        assert np.all(unused.grad == 0.0)

    def test_sum_wx_gradient_is_outer_structure(self):
        rng = np.random.default_rng(3)
        w = Parameter(rng.standard_normal((3, 4)), "w")
        x = tc.constant(rng.standard_normal((4, 2)))
        backward(tc.sum_(tc.matmul(w, x)))
        assert np.allclose(w.grad, x.data.sum(axis=1)[None, :].repeat(3, axis=0))


class TestActivations:
    def test_softmax_uniform(self):
        out = tc.softmax(tc.constant([[0.0, 0.0]]))
        assert np.allclose(out.data, [[0.5, 0.5]])

    def test_softmax_stability(self):
        out = tc.softmax(tc.constant([[1000.0, 0.0]]))
        assert np.all(np.isfinite(out.data))
        assert out.data[0, 0] == pytest.approx(1.0)

    def test_softmax_log_ratios(self):
        out = tc.softmax(tc.constant([[math.log(1), math.log(2), math.log(3)]]))
        assert np.allclose(out.data, [[1 / 6, 2 / 6, 3 / 6]])

    def test_softmax_rows_sum_to_one(self):
        rng = np.random.default_rng(0)
        out = tc.softmax(tc.constant(rng.standard_normal((5, 7)) * 20))
        assert np.allclose(out.data.sum(axis=-1), 1.0, atol=1e-12)

    def test_sigmoid_extremes(self):
        out = tc.sigmoid(tc.constant([-800.0, 0.0, 800.0]))
        assert np.allclose(out.data, [0.0, 0.5, 1.0])


class TestLayerNorm:
    def _affine(self, c, gain=1.0, bias=0.0):
        return tc.constant(np.full(c, gain)), tc.constant(np.full(c, bias))

    def test_constant_row_zeroed(self):
        g, b = self._affine(4)
        out = tc.layer_norm(tc.constant([[3.0, 3.0, 3.0, 3.0]]), g, b)
        assert np.allclose(out.data, 0.0)

    def test_already_normalized_row(self):
        g, b = self._affine(2)
        out = tc.layer_norm(tc.constant([[-1.0, 1.0]]), g, b)
        assert np.allclose(out.data, [[-1.0, 1.0]], atol=1e-4)

    def test_zero_gain_gives_bias(self):
        g, b = self._affine(3, gain=0.0, bias=0.7)
        out = tc.layer_norm(tc.constant([[5.0, -2.0, 0.1]]), g, b)
        assert np.allclose(out.data, 0.7)


class TestBilinear:
    def test_integer_grid_exact(self):
        rng = np.random.default_rng(1)
        m = tc.constant(rng.standard_normal((4, 5, 3)))
        out = tc.bilinear_sample(m, np.array([[2.0, 1.0]]))
        assert np.array_equal(out.data[0], m.data[1, 2])

    def test_cell_center_means_neighbors(self):
        rng = np.random.default_rng(2)
        m = tc.constant(rng.standard_normal((4, 5, 3)))
        out = tc.bilinear_sample(m, np.array([[1.5, 2.5]]))
        want = m.data[2:4, 1:3].mean(axis=(0, 1))
        assert np.allclose(out.data[0], want)

    def test_fully_outside_is_zero(self):
        m = tc.constant(np.ones((4, 5, 3)))
        out = tc.bilinear_sample(m, np.array([[-10.0, -10.0], [100.0, 2.0]]))
        assert np.all(out.data == 0.0)


class TestAttention:
    def test_weights_rows_sum_to_one_with_sink(self):
        rng = np.random.default_rng(5)
        c, heads = 8, 2
        q = tc.constant(rng.standard_normal((3, c)))
        kv = tc.constant(rng.standard_normal((4, c)))
        params = tc.init_mha_params(rng, c, "mha")
        _, weights = tc.mh_cross_attention(q, kv, params, heads, zero_sink=True,
                                           return_weights=True)
        assert weights.shape == (heads, 3, 5)
        assert np.allclose(weights.sum(axis=-1), 1.0, atol=1e-12)

    def test_empty_keys_with_sink_drains_to_zero(self):
        rng = np.random.default_rng(6)
        c = 4
        params = tc.init_mha_params(rng, c, "mha")
        params.w_o.data[...] = np.eye(c)   # identity output proj, zero bias
        q = tc.constant(rng.standard_normal((2, c)))
        kv = tc.constant(np.zeros((0, c)))
        out = tc.mh_cross_attention(q, kv, params, heads=2, zero_sink=True)
        assert np.allclose(out.data, 0.0)

    def test_singleton_key_returns_its_value(self):
        rng = np.random.default_rng(7)
        c = 4
        params = tc.init_mha_params(rng, c, "mha")
        params.w_o.data[...] = np.eye(c)
        q = tc.constant(rng.standard_normal((1, c)))
        kv = tc.constant(rng.standard_normal((1, c)))
        out = tc.mh_cross_attention(q, kv, params, heads=2)
        value = kv.data @ params.w_v.data + params.b_v.data
        assert np.allclose(out.data, value)

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(8)
        c = 8
        params = tc.init_mha_params(rng, c, "mha")
        q = tc.constant(rng.standard_normal((3, c)))
        kv = rng.standard_normal((6, c))
        out1 = tc.mh_cross_attention(q, tc.constant(kv), params, heads=2)
        perm = rng.permutation(6)
        out2 = tc.mh_cross_attention(q, tc.constant(kv[perm]), params, heads=2)
        assert np.allclose(out1.data, out2.data, atol=1e-9)

    def test_duplicate_keys_invariant_without_sink(self):
        # Softmax mass redistributes over duplicated key/value rows.
        rng = np.random.default_rng(18)
        c = 8
        params = tc.init_mha_params(rng, c, "mha")
        q = tc.constant(rng.standard_normal((2, c)))
        kv = rng.standard_normal((5, c))
        base = tc.mh_cross_attention(q, tc.constant(kv), params, heads=2)
        doubled = tc.mh_cross_attention(q, tc.constant(np.repeat(kv, 2, axis=0)),
                                        params, heads=2)
        assert np.allclose(base.data, doubled.data, atol=1e-12)

    def test_head_divisibility(self):
        rng = np.random.default_rng(9)
        params = tc.init_mha_params(rng, 6, "mha")
        with pytest.raises(ConfigError):
            tc.mh_cross_attention(tc.constant(np.zeros((1, 6))),
                                  tc.constant(np.zeros((1, 6))), params, heads=4)


class TestDeformable:
    def _setup(self, c=8, heads=2, n_points=4):
        rng = np.random.default_rng(10)
        params = tc.init_deformable_params(rng, c, heads, n_points, "dmca")
        return rng, params

    def test_zero_init_constant_map(self):
        rng, params = self._setup()
        c = 8
        const = rng.standard_normal(c)
        fmap = tc.constant(np.tile(const, (7, 7, 1)))
        q = tc.constant(rng.standard_normal((3, c)))
        refs = np.full((3, 2), 3.0)
        out = tc.deformable_cross_attention(q, refs, fmap, params, 2, 4)
        # Zero offsets and uniform weights blend the constant; output is its
        # value+output projection.
        want = ((const @ params.w_value.data + params.b_value.data)
                @ params.w_out.data + params.b_out.data)
        assert np.allclose(out.data, np.tile(want, (3, 1)))

    def test_sampling_weights_sum_to_one(self):
        rng, params = self._setup()
        params.w_weight.data += rng.standard_normal(params.w_weight.data.shape)
        q = tc.constant(rng.standard_normal((3, 8)))
        fmap = tc.constant(rng.standard_normal((7, 7, 8)))
        _, weights = tc.deformable_cross_attention(q, np.full((3, 2), 3.0), fmap,
                                                   params, 2, 4, return_weights=True)
        assert weights.shape == (3, 2, 4)
        assert np.allclose(weights.sum(axis=-1), 1.0, atol=1e-12)

    def test_refs_outside_map_gives_output_bias(self):
        rng, params = self._setup()
        params.b_out.data[...] = rng.standard_normal(8)
        q = tc.constant(rng.standard_normal((2, 8)))
        fmap = tc.constant(rng.standard_normal((7, 7, 8)))
        out = tc.deformable_cross_attention(q, np.full((2, 2), -100.0), fmap,
                                            params, 2, 4)
        assert np.allclose(out.data, np.tile(params.b_out.data, (2, 1)))


class TestOptimizer:
    def test_zero_grad_keeps_params(self):
        p = Parameter(np.array([1.0, 2.0]), "p")
        opt = tc.AdamW([p], lr=0.1, weight_decay=0.0)
        opt.step()
        assert np.allclose(p.data, [1.0, 2.0])
        assert opt.step_count == 1

    def test_first_step_is_lr_sized(self):
        p = Parameter(np.array([0.0]), "p")
        opt = tc.AdamW([p], lr=0.05, weight_decay=0.0)
        p.grad[...] = 1.0
        opt.step()
        assert p.data[0] == pytest.approx(-0.05, rel=1e-6)

    def test_weight_decay_decoupled(self):
        p = Parameter(np.array([2.0]), "p")
        opt = tc.AdamW([p], lr=0.1, weight_decay=0.5)
        opt.step()    # zero grad: only decay applies
        assert p.data[0] == pytest.approx(2.0 - 0.1 * 0.5 * 2.0)

    def test_cosine_schedule_endpoints(self):
        assert tc.cosine_lr(0, 100, 0.1) == pytest.approx(0.1)
        assert tc.cosine_lr(100, 100, 0.1) == pytest.approx(0.0, abs=1e-12)
        assert tc.cosine_lr(50, 100, 0.1) == pytest.approx(0.05)

    def test_clip_global_norm(self):
        p = Parameter(np.array([3.0, 4.0]), "p")
        p.grad[...] = [3.0, 4.0]
        total = tc.clip_global_norm([p], 1.0)
        assert total == pytest.approx(5.0)
        assert np.linalg.norm(p.grad) == pytest.approx(1.0)


class TestDeterminism:
    def test_identical_training_trajectories(self):
        def run():
            rng = np.random.default_rng(123)
            w = Parameter(rng.standard_normal((4, 4)), "w")
            opt = tc.AdamW([w], lr=1e-2)
            x = tc.constant(rng.standard_normal((8, 4)))
            for _ in range(5):
                opt.zero_grad()
                y = tc.relu(tc.matmul(x, w))
                backward(tc.sum_(tc.mul(y, y)))
                opt.step()
            return w.data.copy()

        a, b = run(), run()
        assert np.array_equal(a, b)


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        arrays = {
            "layer0/w": rng.standard_normal((3, 4)),
            "layer0/b": rng.standard_normal(4),
            "scalar": np.array(2.5),
        }
        path = tmp_path / "ckpt.bin"
        tc.save_tensors(arrays, path)
        loaded = tc.load_tensors(path)
        assert set(loaded) == set(arrays)
        for k in arrays:
            assert np.array_equal(loaded[k], np.asarray(arrays[k]))
            assert loaded[k].shape == np.asarray(arrays[k]).shape

    def test_names_with_spaces_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            tc.save_tensors({"bad name": np.zeros(2)}, tmp_path / "x.bin")

    def test_header_is_plain_text(self, tmp_path):
        path = tmp_path / "ckpt.bin"
        tc.save_tensors({"w": np.zeros((2, 2))}, path)
        header = path.read_bytes().split(b"---\n")[0].decode("ascii")
        assert header.startswith("polarfuse-tensors v1 1")
        assert "w 2,2 0 4" in header

    def test_corrupt_header_rejected(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"not a container")
        with pytest.raises(ValueError):
            tc.load_tensors(path)
