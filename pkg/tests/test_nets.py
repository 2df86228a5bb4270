import math

import numpy as np
import pytest

from interpolatron.nets import (
    MlpArchitecture,
    MlpBlobsProblem,
    finite_difference_gradient,
    mlp_gradient,
    mlp_loss,
)
from interpolatron.problems import QuadraticProblem, make_blobs


class TestFiniteDifferences:
    def test_scalar_quadratic(self):
        g = finite_difference_gradient(lambda x: 0.5 * float(x @ x), np.array([3.0]), 1e-6)
        assert g[0] == pytest.approx(3.0, abs=1e-9)

    def test_linear_function_is_exact(self):
        a = np.array([2.0, -1.5, 0.25])
        g = finite_difference_gradient(lambda x: float(a @ x), np.zeros(3), 1e-4)
        np.testing.assert_allclose(g, a, atol=1e-10)

    def test_diagonal_quadratic_problem(self):
        p = QuadraticProblem([0.5, 2.0], [1.0, -1.0])
        x = np.array([2.0, 3.0])
        g = finite_difference_gradient(p.loss, x, 1e-6)
        np.testing.assert_allclose(g, p.full_gradient(x), atol=1e-6)

    def test_step_must_be_positive(self):
        with pytest.raises(ValueError):
            finite_difference_gradient(lambda x: 0.0, np.zeros(2), 0.0)


class TestMlpArchitecture:
    def test_param_count(self):
        arch = MlpArchitecture((4, 8, 3))
        assert arch.param_count == 4 * 8 + 8 + 8 * 3 + 3

    def test_unpack_roundtrip(self):
        arch = MlpArchitecture((3, 5, 2))
        params = np.arange(arch.param_count, dtype=np.float64)
        layers = arch.unpack(params)
        assert layers[0][0].shape == (3, 5)
        assert layers[0][1].shape == (5,)
        assert layers[1][0].shape == (5, 2)
        flat = np.concatenate([np.concatenate([W.ravel(), b]) for W, b in layers])
        np.testing.assert_array_equal(flat, params)

    def test_init_is_seeded_and_biases_zero(self):
        arch = MlpArchitecture((4, 8, 3))
        a = arch.init_params(7)
        b = arch.init_params(7)
        np.testing.assert_array_equal(a, b)
        layers = arch.unpack(a)
        for _, bias in layers:
            np.testing.assert_array_equal(bias, np.zeros_like(bias))
        assert not np.array_equal(a, arch.init_params(8))


class TestMlpLoss:
    def test_zero_params_give_log_classes(self):
        arch = MlpArchitecture((4, 8, 3), weight_decay=0.0)
        x = np.random.default_rng(0).standard_normal((10, 4))
        y = np.arange(10) % 3
        loss = mlp_loss(arch, np.zeros(arch.param_count), x, y)
        assert loss == pytest.approx(math.log(3), abs=1e-12)

    def test_weight_decay_term(self):
        # lambda = 2e-4 and ||params||^2 = 100 adds exactly 0.02
        arch0 = MlpArchitecture((2, 2), weight_decay=0.0)
        arch = MlpArchitecture((2, 2), weight_decay=2e-4)
        rng = np.random.default_rng(1)
        params = rng.standard_normal(arch.param_count)
        params = params / np.linalg.norm(params) * 10.0  # norm^2 = 100
        x = rng.standard_normal((5, 2))
        y = np.array([0, 1, 0, 1, 0])
        base = mlp_loss(arch0, params, x, y)
        assert mlp_loss(arch, params, x, y) == pytest.approx(base + 0.02, abs=1e-12)

    def test_batch_duplication_invariance(self):
        arch = MlpArchitecture((3, 6, 2), weight_decay=1e-3)
        rng = np.random.default_rng(2)
        params = rng.standard_normal(arch.param_count)
        x = rng.standard_normal((4, 3))
        y = np.array([0, 1, 1, 0])
        once = mlp_loss(arch, params, x, y)
        twice = mlp_loss(arch, params, np.vstack([x, x]), np.concatenate([y, y]))
        assert twice == pytest.approx(once, abs=1e-12)

    def test_batch_permutation_invariance(self):
        arch = MlpArchitecture((3, 6, 2), weight_decay=1e-3)
        rng = np.random.default_rng(3)
        params = rng.standard_normal(arch.param_count)
        x = rng.standard_normal((6, 3))
        y = np.array([0, 1, 1, 0, 1, 0])
        perm = rng.permutation(6)
        assert mlp_loss(arch, params, x[perm], y[perm]) == pytest.approx(
            mlp_loss(arch, params, x, y), abs=1e-12
        )

    def test_softmax_stability_with_large_logits(self):
        arch = MlpArchitecture((2, 2), weight_decay=0.0)
        params = np.full(arch.param_count, 500.0)
        loss = mlp_loss(arch, params, np.array([[1.0, 1.0]]), np.array([0]))
        assert math.isfinite(loss)


class TestMlpGradient:
    def test_weight_decay_isolation(self):
        # zero inputs kill every data gradient except the output bias,
        # so hidden-weight coordinates carry exactly the decay term
        arch = MlpArchitecture((2, 3, 2), weight_decay=1e-3)
        rng = np.random.default_rng(4)
        params = rng.standard_normal(arch.param_count)
        x = np.zeros((4, 2))
        y = np.array([0, 1, 0, 1])
        g = mlp_gradient(arch, params, x, y)
        w1_size = 2 * 3
        np.testing.assert_allclose(
            g[:w1_size], 2 * arch.weight_decay * params[:w1_size], atol=1e-12
        )

    def test_single_linear_layer_closed_form(self):
        # gradient of cross-entropy through one linear layer is
        # (softmax - one_hot) outer input
        arch = MlpArchitecture((3, 2), weight_decay=0.0)
        rng = np.random.default_rng(5)
        params = rng.standard_normal(arch.param_count)
        x = rng.standard_normal(3)
        y = np.array([1])
        W, b = arch.unpack(params)[0]
        logits = x @ W + b
        probs = np.exp(logits - logits.max())
        probs /= probs.sum()
        err = probs.copy()
        err[1] -= 1.0
        expect = np.concatenate([np.outer(x, err).ravel(), err])
        np.testing.assert_allclose(
            mlp_gradient(arch, params, x[None, :], y), expect, atol=1e-12
        )

    def test_matches_finite_differences(self):
        # relative error < 1e-5 per coordinate wherever the central
        # difference can resolve it; the 1e-9 absolute floor sits just
        # above the oracle's float64 cancellation noise at step 1e-6
        arch = MlpArchitecture((4, 8, 3), weight_decay=2e-4)
        data = make_blobs(30, 4, 3, 1.0, seed=11)
        rng = np.random.default_rng(6)
        for trial in range(20):
            params = rng.standard_normal(arch.param_count) * 0.7
            idx = rng.choice(30, size=8, replace=False)
            x, y = data.points[idx], data.labels[idx]
            g = mlp_gradient(arch, params, x, y)
            fd = finite_difference_gradient(
                lambda p: mlp_loss(arch, p, x, y), params, 1e-6
            )
            mask = (np.abs(g) >= 1e-8) | (np.abs(fd) >= 1e-8)
            bound = 1e-9 + 1e-5 * np.maximum(np.abs(g), np.abs(fd))
            assert np.all(np.abs(g - fd)[mask] <= bound[mask]), f"trial {trial}"


class TestMlpBlobsProblem:
    def _problem(self):
        data = make_blobs(60, 4, 3, 1.0, seed=3)
        arch = MlpArchitecture((4, 8, 3), weight_decay=2e-4)
        return MlpBlobsProblem(arch, data)

    def test_full_batch_stochastic_equals_full_gradient_bitwise(self):
        p = self._problem()
        rng = np.random.default_rng(7)
        x = rng.standard_normal(p.dim)
        g1 = p.stochastic_gradient(x, batch_seed=1234, batch_size=60)
        g2 = p.full_gradient(x)
        assert np.array_equal(g1, g2)

    def test_stochastic_gradient_deterministic(self):
        p = self._problem()
        rng = np.random.default_rng(8)
        x = rng.standard_normal(p.dim)
        a = p.stochastic_gradient(x, batch_seed=99, batch_size=16)
        b = p.stochastic_gradient(x, batch_seed=99, batch_size=16)
        assert np.array_equal(a, b)
        c = p.stochastic_gradient(x, batch_seed=100, batch_size=16)
        assert not np.array_equal(a, c)

    def test_shape_validation(self):
        data = make_blobs(30, 4, 3, 1.0, seed=3)
        with pytest.raises(ValueError):
            MlpBlobsProblem(MlpArchitecture((5, 8, 3)), data)
        with pytest.raises(ValueError):
            MlpBlobsProblem(MlpArchitecture((4, 8, 2)), data)
