"""Dense-network building blocks: initialization, backprop, Adam, clipping."""

import numpy as np
import pytest

from deployid.errors import ValidationError
from deployid.rl import (Adam, clip_global_norm, global_norm, mlp_backward,
                         mlp_forward, mlp_init, one_hot, one_hot_batch,
                         orthogonal)
from deployid.seeding import derive_rng


class TestOrthogonal:
    @pytest.mark.parametrize("shape", [(8, 8), (12, 5), (5, 12)])
    def test_orthonormal_rows_or_columns(self, shape):
        gain = 1.3
        w = orthogonal(shape, gain, derive_rng(0, 1))
        rows, cols = shape
        if rows >= cols:
            gram = w.T @ w
            expected = gain ** 2 * np.eye(cols)
        else:
            gram = w @ w.T
            expected = gain ** 2 * np.eye(rows)
        assert np.allclose(gram, expected, atol=1e-12)

    def test_deterministic_for_fixed_stream(self):
        a = orthogonal((6, 4), 1.0, derive_rng(3, 7))
        b = orthogonal((6, 4), 1.0, derive_rng(3, 7))
        assert np.array_equal(a, b)


class TestForwardBackward:
    def test_forward_shapes_and_linearity_of_head(self):
        params = mlp_init([3, 5, 2], derive_rng(1))
        x = derive_rng(2).standard_normal((7, 3))
        out, cache = mlp_forward(params, x)
        assert out.shape == (7, 2)
        assert len(cache) == 3
        # final layer has no activation: doubling its weights doubles the
        # output shift relative to the bias
        w_last = params[-2]
        base = out.copy()
        params[-2] = 2.0 * w_last
        out2, _ = mlp_forward(params, x)
        hidden = cache[-2]
        assert np.allclose(out2 - out, hidden @ w_last, atol=1e-12)
        assert np.allclose(base, out)

    def test_backward_matches_finite_differences(self):
        rng = derive_rng(5)
        params = mlp_init([3, 4, 4, 2], rng)
        x = rng.standard_normal((5, 3))
        proj = rng.standard_normal((5, 2))

        def loss(ps):
            out, _ = mlp_forward(ps, x)
            return float(np.sum(out * proj))

        out, cache = mlp_forward(params, x)
        grads = mlp_backward(params, cache, proj)
        h = 1e-6
        for a_idx, arr in enumerate(params):
            for i in range(arr.size):
                keep = arr.flat[i]
                arr.flat[i] = keep + h
                up = loss(params)
                arr.flat[i] = keep - h
                down = loss(params)
                arr.flat[i] = keep
                fd = (up - down) / (2 * h)
                assert grads[a_idx].flat[i] == pytest.approx(fd, abs=1e-6)

    def test_rejects_non_batched_input(self):
        params = mlp_init([3, 2], derive_rng(0))
        with pytest.raises(ValidationError):
            mlp_forward(params, np.zeros(3))

    def test_init_requires_two_sizes(self):
        with pytest.raises(ValidationError):
            mlp_init([4], derive_rng(0))


class TestAdam:
    def test_matches_reference_recursion(self):
        rng = derive_rng(11)
        params = [rng.standard_normal((3, 2)), rng.standard_normal(2)]
        shadow = [p.copy() for p in params]
        opt = Adam(params, lr=1e-2, eps=1e-5)
        m = [np.zeros_like(p) for p in shadow]
        v = [np.zeros_like(p) for p in shadow]
        for t in range(1, 6):
            grads = [rng.standard_normal(p.shape) for p in params]
            opt.step(grads)
            for j, g in enumerate(grads):
                m[j] = 0.9 * m[j] + 0.1 * g
                v[j] = 0.999 * v[j] + 0.001 * g * g
                mhat = m[j] / (1 - 0.9 ** t)
                vhat = v[j] / (1 - 0.999 ** t)
                shadow[j] -= 1e-2 * mhat / (np.sqrt(vhat) + 1e-5)
            for got, want in zip(params, shadow):
                assert np.allclose(got, want, atol=1e-14)

    def test_first_step_is_signed_learning_rate(self):
        # bias corrections cancel at t = 1, so the step is lr * g/(|g| + eps)
        p = np.array([1.0, -2.0])
        opt = Adam([p], lr=0.05, eps=1e-5)
        g = np.array([3.0, -0.5])
        opt.step([g])
        expected = np.array([1.0, -2.0]) - 0.05 * g / (np.abs(g) + 1e-5)
        assert np.allclose(p, expected, atol=1e-12)

    def test_mismatched_grad_list_rejected(self):
        opt = Adam([np.zeros(2)])
        with pytest.raises(ValidationError):
            opt.step([np.zeros(2), np.zeros(2)])


class TestClipping:
    def test_large_gradients_scaled_to_cap(self):
        grads = [np.full(4, 10.0), np.full((2, 2), -10.0)]
        clipped, norm = clip_global_norm(grads, 0.5)
        assert norm == pytest.approx(np.sqrt(8 * 100.0))
        assert global_norm(clipped) == pytest.approx(0.5, rel=1e-5)
        # direction preserved
        assert np.all(clipped[0] > 0) and np.all(clipped[1] < 0)

    def test_small_gradients_untouched(self):
        grads = [np.array([0.1, -0.1])]
        clipped, norm = clip_global_norm(grads, 0.5)
        assert clipped[0] is grads[0]
        assert norm == pytest.approx(np.sqrt(0.02))


class TestOneHot:
    def test_vector_and_batch(self):
        assert np.array_equal(one_hot(2, 4), [0.0, 0.0, 1.0, 0.0])
        batch = one_hot_batch([0, 3, 1], 4)
        assert batch.shape == (3, 4)
        assert np.array_equal(batch.sum(axis=1), [1.0, 1.0, 1.0])
        assert batch[1, 3] == 1.0

    def test_out_of_range_rejected(self):
        with pytest.raises(ValidationError):
            one_hot(4, 4)
        with pytest.raises(ValidationError):
            one_hot_batch([0, -1], 4)
