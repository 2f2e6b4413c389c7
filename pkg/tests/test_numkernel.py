import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from avfbel import numkernel as nk

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def rel_err(a, b):
    return np.max(np.abs(a - b)) / max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-8)


class TestConv:
    def test_identity_kernel(self):
        x = np.array([[[[1.0, 2.0], [3.0, 4.0]]]])
        out = nk.conv2d_relu(x, np.ones((1, 1, 1, 1)), np.zeros(1), 1, 0)
        np.testing.assert_array_equal(out, x)

    def test_scaled_kernel_with_bias(self):
        x = np.array([[[[1.0, 2.0], [3.0, 4.0]]]])
        out = nk.conv2d_relu(x, np.full((1, 1, 1, 1), 2.0), np.array([-3.0]), 1, 0)
        np.testing.assert_array_equal(out, [[[[0.0, 1.0], [3.0, 5.0]]]])

    def test_v1_output_shape(self):
        out = nk.conv2d(np.zeros((1, 5, 16, 16)), np.zeros((16, 5, 7, 7)), np.zeros(16), 2, 3)
        assert out.shape == (1, 16, 8, 8)

    def test_default_padding_is_half_kernel(self):
        out = nk.conv2d(np.zeros((1, 1, 6, 6)), np.zeros((1, 1, 3, 3)), np.zeros(1))
        assert out.shape == (1, 1, 6, 6)

    def test_matches_direct_loop(self):
        rng = np.random.default_rng(0)
        x, k, b = rng.normal(size=(2, 3, 5, 6)), rng.normal(size=(4, 3, 3, 3)), rng.normal(size=4)
        out = nk.conv2d(x, k, b, 2, 1)
        xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
        ref = np.zeros_like(out)
        for n in range(2):
            for o in range(4):
                for i in range(out.shape[2]):
                    for j in range(out.shape[3]):
                        ref[n, o, i, j] = np.sum(xp[n, :, 2 * i:2 * i + 3, 2 * j:2 * j + 3] * k[o]) + b[o]
        np.testing.assert_allclose(out, ref, atol=1e-12)

    def test_channel_mismatch(self):
        with pytest.raises(nk.ShapeError, match="channel"):
            nk.conv2d(np.zeros((1, 2, 4, 4)), np.zeros((1, 3, 3, 3)), np.zeros(1))

    def test_non_finite_input(self):
        x = np.zeros((1, 1, 3, 3))
        x[0, 0, 1, 1] = np.nan
        with pytest.raises(nk.NumericDomainError):
            nk.conv2d(x, np.zeros((1, 1, 3, 3)), np.zeros(1))

    @settings(max_examples=30, deadline=None)
    @given(arrays(np.float64, (1, 2, 5, 5), elements=finite), arrays(np.float64, (3, 2, 3, 3), elements=finite))
    def test_relu_output_non_negative(self, x, k):
        assert np.all(nk.conv2d_relu(x, k, np.zeros(3), 1, 1) >= 0)


class TestPooling:
    def test_two_by_two(self):
        np.testing.assert_array_equal(nk.maxpool2d(np.array([[[[1.0, 2], [3, 4]]]]), 2, 2), [[[[4.0]]]])

    def test_constant(self):
        np.testing.assert_array_equal(nk.maxpool2d(np.full((1, 2, 4, 4), 3.5), 2), np.full((1, 2, 2, 2), 3.5))

    def test_ramp(self):
        x = np.arange(1.0, 17.0).reshape(1, 1, 4, 4)
        np.testing.assert_array_equal(nk.maxpool2d(x, 2, 2)[0, 0], [[6, 8], [14, 16]])

    def test_overlapping_windows(self):
        x = np.arange(9.0).reshape(1, 1, 3, 3)
        np.testing.assert_array_equal(nk.maxpool2d(x, 2, 1)[0, 0], [[4, 5], [7, 8]])

    def test_window_too_large(self):
        with pytest.raises(nk.ShapeError):
            nk.maxpool2d(np.zeros((1, 1, 1, 1)), 2)

    def test_ties_route_to_first(self):
        dx = nk.maxpool2d_backward(np.ones((1, 1, 1, 1)), np.ones((1, 1, 2, 2)), 2)
        np.testing.assert_array_equal(dx[0, 0], [[1, 0], [0, 0]])

    @settings(max_examples=30, deadline=None)
    @given(arrays(np.float64, (2, 3, 4, 6), elements=finite))
    def test_bounded_by_input_max(self, x):
        out = nk.maxpool2d(x, 2)
        assert out.max() <= x.max()
        assert out.shape == (2, 3, 2, 3)

    def test_avg_pool_examples(self):
        np.testing.assert_array_equal(nk.adaptive_avg_pool_1x1(np.full((1, 1, 3, 3), 2.5)), [[[[2.5]]]])
        np.testing.assert_array_equal(nk.adaptive_avg_pool_1x1(np.array([[[[1.0, 3], [5, 7]]]])), [[[[4.0]]]])
        np.testing.assert_array_equal(nk.adaptive_avg_pool_1x1(np.zeros((2, 3, 4, 4))), np.zeros((2, 3, 1, 1)))

    @settings(max_examples=30, deadline=None)
    @given(arrays(np.float64, (2, 3, 5, 4), elements=finite))
    def test_avg_pool_preserves_channel_mean(self, x):
        np.testing.assert_allclose(nk.adaptive_avg_pool_1x1(x)[:, :, 0, 0], x.mean(axis=(2, 3)), atol=1e-12)


class TestDense:
    def test_linear_examples(self):
        x = np.array([4.0, 5.0])
        np.testing.assert_array_equal(nk.linear(x, np.eye(2), np.zeros(2)), x)
        np.testing.assert_array_equal(nk.linear(x, np.array([[1.0, 2.0]]), np.array([3.0])), [17.0])
        np.testing.assert_array_equal(nk.linear(x, np.zeros((3, 2)), np.array([1.0, 2, 3])), [1, 2, 3])

    def test_linear_mismatch(self):
        with pytest.raises(nk.ShapeError):
            nk.linear(np.zeros(3), np.zeros((2, 2)), np.zeros(2))

    def test_relu_and_mse(self):
        np.testing.assert_array_equal(nk.relu(np.array([-1.0, 0.0, 2.0])), [0, 0, 2])
        assert nk.mse_loss([1.0, 1.0], [1.0, 1.0]) == 0.0
        assert nk.mse_loss([0.0, 2.0], [1.0, 0.0]) == 2.5

    def test_mse_length_mismatch(self):
        with pytest.raises(nk.ShapeError):
            nk.mse_loss([1.0, 2.0], [1.0])


class TestAdam:
    def test_zero_gradient_no_decay(self):
        p = np.array([1.0, -2.0])
        state = nk.AdamState.zeros_like(p, weight_decay=0.0)
        new, state = nk.adam_step(p, np.zeros(2), state)
        np.testing.assert_array_equal(new, p)
        assert state.step == 1

    def test_first_step_size_is_lr(self):
        p = np.zeros(3)
        g = np.array([0.5, -3.0, 1e-3])
        new, _ = nk.adam_step(p, g, nk.AdamState.zeros_like(p, weight_decay=0.0))
        np.testing.assert_allclose(new, -1e-3 * g / (np.abs(g) + 1e-8), rtol=1e-9)

    def test_monotone_under_constant_gradient(self):
        p = np.array([1.0])
        state = nk.AdamState.zeros_like(p)
        trail = [p]
        for _ in range(3):
            p, state = nk.adam_step(p, np.array([2.0]), state)
            trail.append(p)
        assert trail[0] > trail[1] > trail[2] > trail[3]
        assert state.step == 3

    def test_decoupled_weight_decay(self):
        p = np.array([2.0])
        new, _ = nk.adam_step(p, np.zeros(1), nk.AdamState.zeros_like(p, lr=0.1, weight_decay=0.5))
        np.testing.assert_allclose(new, [2.0 - 0.1 * 0.5 * 2.0])

    def test_errors(self):
        p = np.zeros(2)
        with pytest.raises(nk.ShapeError):
            nk.adam_step(p, np.zeros(3), nk.AdamState.zeros_like(p))
        with pytest.raises(nk.NumericDomainError):
            nk.adam_step(p, np.array([np.inf, 0.0]), nk.AdamState.zeros_like(p))


class TestInit:
    def test_bound_and_determinism(self):
        w = nk.xavier_uniform_init((16, 5, 7, 7), 3)
        bound = np.sqrt(6.0 / (5 * 49 + 16 * 49))
        assert np.abs(w).max() <= bound
        np.testing.assert_array_equal(w, nk.xavier_uniform_init((16, 5, 7, 7), 3))

    def test_mean_near_zero(self):
        assert abs(nk.xavier_uniform_init((100, 100), 0).mean()) < 0.01

    def test_rank_one_rejected(self):
        with pytest.raises(nk.ShapeError):
            nk.xavier_uniform_init((5,), 0)

    def test_derive_seed_is_stable_and_label_sensitive(self):
        assert nk.derive_seed(1, "a", 2) == nk.derive_seed(1, "a", 2)
        assert len({nk.derive_seed(1, "a"), nk.derive_seed(1, "b"), nk.derive_seed(2, "a")}) == 3


class TestFiniteDiff:
    def test_sum_of_squares(self):
        g = nk.finite_diff_grad(lambda p: np.sum(p ** 2), np.array([1.0, 2.0]))
        np.testing.assert_allclose(g, [2.0, 4.0], atol=1e-6)

    def test_constant_and_linear(self):
        np.testing.assert_array_equal(nk.finite_diff_grad(lambda p: 3.0, np.ones(3)), np.zeros(3))
        a = np.array([0.5, -2.0, 3.0])
        np.testing.assert_allclose(nk.finite_diff_grad(lambda p: a @ p, np.ones(3)), a, atol=1e-8)

    def test_non_finite(self):
        with pytest.raises(nk.NumericDomainError):
            nk.finite_diff_grad(lambda p: np.inf if p[0] > 0 else 0.0, np.array([0.0]))


INSTANCES = range(20)


class TestGradients:
    """Hand-written backward passes against central differences."""

    @pytest.mark.parametrize("seed", INSTANCES)
    def test_conv(self, seed):
        rng = np.random.default_rng(seed)
        stride, k = (1, 3) if seed % 2 else (2, 3 + 2 * (seed % 3 == 0))
        x = rng.normal(size=(2, 2, 5, 5))
        w = rng.normal(size=(3, 2, k, k))
        b = rng.normal(size=3)
        dout = rng.normal(size=nk.conv2d(x, w, b, stride).shape)
        dx, dw, db = nk.conv2d_backward(dout, x, w, stride)
        f = lambda xx, ww, bb: np.sum(nk.conv2d(xx, ww, bb, stride) * dout)  # noqa: E731
        assert rel_err(dx, nk.finite_diff_grad(lambda p: f(p, w, b), x)) < 1e-4
        assert rel_err(dw, nk.finite_diff_grad(lambda p: f(x, p, b), w)) < 1e-4
        assert rel_err(db, nk.finite_diff_grad(lambda p: f(x, w, p), b)) < 1e-4

    @pytest.mark.parametrize("seed", INSTANCES)
    def test_conv_relu(self, seed):
        rng = np.random.default_rng(100 + seed)
        x, w, b = rng.normal(size=(1, 2, 4, 4)), rng.normal(size=(2, 2, 3, 3)), rng.normal(size=2)
        dout = rng.normal(size=(1, 2, 4, 4))
        dx, dw, db = nk.conv2d_relu_backward(dout, x, w, b)
        f = lambda ww: np.sum(nk.conv2d_relu(x, ww, b) * dout)  # noqa: E731
        assert rel_err(dw, nk.finite_diff_grad(f, w)) < 1e-4

    @pytest.mark.parametrize("seed", INSTANCES)
    def test_maxpool(self, seed):
        rng = np.random.default_rng(200 + seed)
        window, stride = (2, 2) if seed % 2 else (2, 1)
        x = rng.normal(size=(2, 2, 4, 4))
        dout = rng.normal(size=nk.maxpool2d(x, window, stride).shape)
        dx = nk.maxpool2d_backward(dout, x, window, stride)
        assert rel_err(dx, nk.finite_diff_grad(lambda p: np.sum(nk.maxpool2d(p, window, stride) * dout), x)) < 1e-4

    @pytest.mark.parametrize("seed", INSTANCES)
    def test_avg_pool(self, seed):
        rng = np.random.default_rng(300 + seed)
        x, dout = rng.normal(size=(2, 3, 3, 2)), rng.normal(size=(2, 3, 1, 1))
        dx = nk.adaptive_avg_pool_1x1_backward(dout, x)
        assert rel_err(dx, nk.finite_diff_grad(lambda p: np.sum(nk.adaptive_avg_pool_1x1(p) * dout), x)) < 1e-4

    @pytest.mark.parametrize("seed", INSTANCES)
    def test_linear(self, seed):
        rng = np.random.default_rng(400 + seed)
        x, w, b = rng.normal(size=(4, 5)), rng.normal(size=(2, 5)), rng.normal(size=2)
        dout = rng.normal(size=(4, 2))
        dx, dw, db = nk.linear_backward(dout, x, w)
        f = lambda xx, ww, bb: np.sum(nk.linear(xx, ww, bb) * dout)  # noqa: E731
        assert rel_err(dx, nk.finite_diff_grad(lambda p: f(p, w, b), x)) < 1e-4
        assert rel_err(dw, nk.finite_diff_grad(lambda p: f(x, p, b), w)) < 1e-4
        assert rel_err(db, nk.finite_diff_grad(lambda p: f(x, w, p), b)) < 1e-4

    @pytest.mark.parametrize("seed", INSTANCES)
    def test_relu(self, seed):
        rng = np.random.default_rng(500 + seed)
        x = rng.normal(size=10)
        x[np.abs(x) < 1e-3] = 0.5  # keep away from the kink
        dout = rng.normal(size=10)
        dx = nk.relu_backward(dout, x)
        assert rel_err(dx, nk.finite_diff_grad(lambda p: np.sum(nk.relu(p) * dout), x)) < 1e-4

    @pytest.mark.parametrize("seed", INSTANCES)
    def test_mse(self, seed):
        rng = np.random.default_rng(600 + seed)
        pred, target = rng.normal(size=10), rng.normal(size=10)
        g = nk.mse_grad(pred, target)
        assert rel_err(g, nk.finite_diff_grad(lambda p: nk.mse_loss(p, target), pred)) < 1e-4
