import math

import numpy as np
import pytest

from piecewise_prox import Dataset, least_squares, logistic_loss, spectral_norm


def finite_diff_gradient(loss, x, h=1e-5):
    g = np.zeros_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (loss.value(x + e) - loss.value(x - e)) / (2 * h)
    return g


class TestDataset:
    def test_shapes_validated(self):
        with pytest.raises(ValueError, match="labels shape"):
            Dataset(np.zeros((3, 2)), np.zeros(4))
        with pytest.raises(ValueError, match="2-d"):
            Dataset(np.zeros(3), np.zeros(3))

    def test_binary_labels_enforced_for_logistic(self):
        with pytest.raises(ValueError, match=r"\+-1"):
            logistic_loss(Dataset(np.ones((2, 1)), np.array([0.0, 1.0])))


class TestValues:
    def test_logistic_zero_margin(self):
        loss = logistic_loss(Dataset(np.array([[1.0]]), np.array([1.0])))
        assert loss.value(np.zeros(1)) == pytest.approx(math.log(2.0), abs=1e-12)

    def test_least_squares_interpolation(self):
        rng = np.random.default_rng(0)
        D = rng.standard_normal((5, 3))
        x_star = rng.standard_normal(3)
        loss = least_squares(Dataset(D, D @ x_star))
        assert loss.value(x_star) == pytest.approx(0.0, abs=1e-20)
        assert np.allclose(loss.gradient(x_star), 0.0, atol=1e-12)

    def test_logistic_toy_scalar_summation(self):
        X = np.array([[1.0, -2.0], [0.5, 0.25]])
        y = np.array([1.0, -1.0])
        x = np.array([0.3, -0.2])
        loss = logistic_loss(Dataset(X, y))
        expect = 0.0
        for i in range(2):
            margin = y[i] * (X[i] @ x)
            expect += math.log(1.0 + math.exp(-margin)) / 2
        assert loss.value(x) == pytest.approx(expect, rel=1e-12)

    def test_dimension_mismatch(self):
        loss = least_squares(Dataset(np.ones((2, 3)), np.ones(2)))
        with pytest.raises(ValueError, match="shape"):
            loss.value(np.zeros(4))
        with pytest.raises(ValueError, match="shape"):
            loss.gradient(np.zeros(2))

    def test_logistic_overflow_safe(self):
        loss = logistic_loss(Dataset(np.array([[1.0]]), np.array([1.0])))
        big = loss.value(np.array([-1000.0]))
        assert big == pytest.approx(1000.0, rel=1e-12)  # asymptotic linear branch
        assert loss.value(np.array([1000.0])) == pytest.approx(0.0, abs=1e-300)
        assert np.isfinite(loss.gradient(np.array([-1000.0]))).all()


class TestGradients:
    def test_logistic_single_point(self):
        loss = logistic_loss(Dataset(np.array([[1.0]]), np.array([1.0])))
        assert loss.gradient(np.zeros(1))[0] == pytest.approx(-0.5, abs=1e-12)

    @pytest.mark.parametrize("kind", ["least-squares", "logistic"])
    def test_matches_finite_differences(self, kind):
        rng = np.random.default_rng(11)
        n, d = 40, 6
        X = rng.standard_normal((n, d))
        if kind == "logistic":
            y = rng.choice((-1.0, 1.0), size=n)
            loss = logistic_loss(Dataset(X, y))
        else:
            y = rng.standard_normal(n)
            loss = least_squares(Dataset(X, y))
        for _ in range(20):
            x = rng.uniform(-2, 2, size=d)
            g = loss.gradient(x)
            fd = finite_diff_gradient(loss, x)
            assert np.linalg.norm(g - fd) <= 1e-5 * max(1.0, np.linalg.norm(g))


class TestLipschitz:
    def test_identity_design(self):
        loss = least_squares(Dataset(np.eye(3), np.zeros(3)))
        assert loss.lipschitz_bound() == pytest.approx(2.0, rel=1e-9)

    def test_single_row_logistic(self):
        loss = logistic_loss(Dataset(np.array([[2.0]]), np.array([1.0])))
        assert loss.lipschitz_bound() == pytest.approx(1.0, rel=1e-9)

    def test_spectral_norm_matches_svd(self):
        rng = np.random.default_rng(2)
        A = rng.standard_normal((12, 7))
        assert spectral_norm(A) == pytest.approx(np.linalg.svd(A, compute_uv=False)[0], rel=1e-7)

    @pytest.mark.parametrize("kind,seed", [("least-squares", 3), ("logistic", 13)])
    def test_secant_ratios_below_bound(self, kind, seed):
        rng = np.random.default_rng(seed)
        n, d = 30, 5
        X = rng.standard_normal((n, d))
        if kind == "logistic":
            loss = logistic_loss(Dataset(X, rng.choice((-1.0, 1.0), size=n)))
        else:
            loss = least_squares(Dataset(X, rng.standard_normal(n)))
        L = loss.lipschitz_bound()
        for _ in range(1000):
            x = rng.uniform(-3, 3, size=d)
            y = rng.uniform(-3, 3, size=d)
            num = np.linalg.norm(loss.gradient(x) - loss.gradient(y))
            den = np.linalg.norm(x - y)
            assert num <= L * den * (1.0 + 1e-9)


class TestConvexity:
    @pytest.mark.parametrize("kind", ["least-squares", "logistic"])
    def test_midpoint_convexity(self, kind):
        rng = np.random.default_rng(8)
        n, d = 25, 4
        X = rng.standard_normal((n, d))
        if kind == "logistic":
            loss = logistic_loss(Dataset(X, rng.choice((-1.0, 1.0), size=n)))
        else:
            loss = least_squares(Dataset(X, rng.standard_normal(n)))
        for _ in range(200):
            x = rng.uniform(-2, 2, size=d)
            y = rng.uniform(-2, 2, size=d)
            mid = loss.value(0.5 * (x + y))
            assert mid <= 0.5 * (loss.value(x) + loss.value(y)) + 1e-10
