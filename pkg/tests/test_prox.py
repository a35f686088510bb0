import math

import numpy as np
import pytest

from piecewise_prox import (
    PieceSpec,
    ProxError,
    Quadratic,
    build_piecewise,
    capped_l1,
    indicator_penalty,
    l0_penalty,
    minimizer_halfwidth,
    prox_oracle,
    prox_surrogate,
    prox_true,
    prox_vector,
)
from piecewise_prox.piecewise import Affine


def objective(f, s, x, v):
    return (v - x) ** 2 / (2.0 * s) + float(f(np.asarray(v, dtype=float)))


class TestClosedForms:
    def test_soft_threshold(self):
        f2 = capped_l1(1.0, 1.0).surrogate(2)
        assert prox_surrogate(f2, 0.5, 2.0) == pytest.approx(1.5)
        assert prox_surrogate(f2, 0.5, -2.0) == pytest.approx(-1.5)
        assert prox_surrogate(f2, 0.5, 0.3) == 0.0

    def test_constant_is_identity(self):
        f1 = capped_l1(1.0, 1.0).surrogate(1)
        assert prox_surrogate(f1, 0.7, 0.37) == 0.37

    def test_indicator_snap_branches(self):
        # lam=2, s=0.25 so sqrt(2 lam s) = 1, tau = 1
        f2 = indicator_penalty(2.0, 1.0).surrogate(2)
        assert prox_surrogate(f2, 0.25, 0.5) == 1.0
        assert prox_surrogate(f2, 0.25, -0.5) == -0.5
        assert prox_surrogate(f2, 0.25, 2.0) == 2.0

    def test_indicator_snap_tie(self):
        # at x exactly tau - sqrt(2 lam s) both branches are global minimizers
        f2 = indicator_penalty(2.0, 1.0).surrogate(2)
        x = 1.0 - math.sqrt(2.0 * 2.0 * 0.25)
        out = prox_surrogate(f2, 0.25, x)
        assert out == 0.0  # smaller absolute value wins
        assert abs(objective(f2, 0.25, x, out) - objective(f2, 0.25, x, 1.0)) < 1e-12

    def test_hard_threshold(self):
        f2 = l0_penalty(1.0).surrogate(2)
        assert prox_surrogate(f2, 0.5, 0.4) == 0.0
        assert prox_surrogate(f2, 0.5, 1.4) == 1.4
        # tie at |x| = sqrt(2 lam s) = 1: origin wins on absolute value
        assert prox_surrogate(f2, 0.5, 1.0) == 0.0

    def test_linear_shift(self):
        from piecewise_prox import leaky_capped_l1

        f3 = leaky_capped_l1(1.0, 1.0, 0.5).surrogate(3)
        assert prox_surrogate(f3, 0.4, 2.0) == pytest.approx(2.0 - 0.4 * 0.5)

    def test_soft_threshold_sign_and_origin(self):
        f2 = capped_l1(0.7, 2.0).surrogate(2)
        assert prox_surrogate(f2, 0.9, 0.0) == 0.0
        rng = np.random.default_rng(4)
        for x in rng.uniform(-5, 5, size=50):
            out = prox_surrogate(f2, 0.9, float(x))
            assert out * x >= 0.0


class TestOracle:
    def test_quadratic_analytic(self):
        # argmin (v-x)^2/(2s) + v^2 = x / (1 + 2s)
        out = prox_oracle(lambda v: np.asarray(v) ** 2, 1.0, 3.0, 4.0, 1e-5)
        assert out == pytest.approx(1.0, abs=1e-6)

    def test_zero_function_identity(self):
        out = prox_oracle(lambda v: 0.0 * np.asarray(v), 0.5, 1.234, 1.0, 1e-5)
        assert out == pytest.approx(1.234, abs=1e-9)

    def test_true_capped_l1_branch_choice(self):
        # prox of the true penalty near the cap: compare both branch candidates
        fn = capped_l1(0.2, 1.0)
        s, x = 1.0, 1.05
        out = prox_oracle(fn.evaluate, s, x, 2.0, 1e-6)
        soft = math.copysign(abs(x) - 0.2 * s, x)
        best = min((soft, x), key=lambda v: objective(fn.evaluate, s, x, v))
        assert objective(fn.evaluate, s, x, out) <= objective(fn.evaluate, s, x, best) + 1e-9

    def test_nonfinite_rejected(self):
        with np.errstate(invalid="ignore", divide="ignore"), \
                pytest.raises(ProxError, match="non-finite"):
            prox_oracle(lambda v: np.log(np.asarray(v)), 1.0, 0.5, 2.0, 1e-3)

    def test_halfwidth_is_sound(self):
        # the bracket bound must contain the closed-form minimizer
        rng = np.random.default_rng(11)
        f2 = indicator_penalty(2.0, 1.0).surrogate(2)
        for _ in range(200):
            s = rng.uniform(1e-3, 1.0)
            x = rng.uniform(-10, 10)
            hw = minimizer_halfwidth(0.0, 2.0, (1.0,), s, x)
            out = prox_surrogate(f2, s, float(x))
            assert abs(out - x) <= hw


class TestVector:
    def test_constant_coordinates_unchanged(self):
        fn = capped_l1(1.0, 1.0)
        surs = [fn.surrogate(1), fn.surrogate(1)]
        u = np.array([0.3, -2.5])
        assert np.array_equal(prox_vector(surs, 0.5, u), u)

    def test_mixed_kernels_match_scalar_calls(self):
        fn = capped_l1(0.5, 1.0)
        l0 = l0_penalty(0.8)
        surs = [fn.surrogate(2), fn.surrogate(3), l0.surrogate(2)]
        u = np.array([0.9, 4.0, 0.2])
        out = prox_vector(surs, 0.6, u)
        expect = np.array([prox_surrogate(s_, 0.6, float(ui)) for s_, ui in zip(surs, u)])
        assert np.array_equal(out, expect)

    def test_matches_oracle_capped_l1(self):
        fn = capped_l1(0.2, 1.0)
        rng = np.random.default_rng(7)
        u = rng.uniform(-3, 3, size=20)
        s = 0.8
        surs = [fn.surrogate(int(m)) for m in fn.piece_index(u)]
        out = prox_vector(surs, s, u)
        for i, sur in enumerate(surs):
            hw = minimizer_halfwidth(sur.slope_bound(), 0.0, (), s, float(u[i]))
            ref = prox_oracle(sur, s, float(u[i]), hw, 1e-6)
            assert abs(out[i] - ref) < 1e-5

    def test_length_mismatch(self):
        fn = capped_l1(0.2, 1.0)
        with pytest.raises(ValueError, match="surrogates"):
            prox_vector([fn.surrogate(1)], 0.5, np.zeros(2))


class TestNumericFallback:
    def fn_without_kernels(self):
        # quadratic bowl piece between affine wings: no registered closed form
        return build_piecewise(
            [
                PieceSpec(-math.inf, -1.0, Affine(-1.0, 0.0)),
                PieceSpec(-1.0, 1.0, Quadratic(1.0, 0.0, 0.0)),
                PieceSpec(1.0, math.inf, Affine(0.5, 0.5)),
            ],
            ["continuous", "continuous"],
        )

    def test_middle_surrogate_numeric_prox_matches_oracle(self):
        fn = self.fn_without_kernels()
        f2 = fn.surrogate(2)
        assert f2.kernel is None
        rng = np.random.default_rng(3)
        for _ in range(60):
            s = rng.uniform(1e-2, 1.0)
            x = rng.uniform(-4, 4)
            out = prox_surrogate(f2, s, float(x))
            hw = minimizer_halfwidth(f2.slope_bound(), 0.0, (), s, float(x))
            ref = prox_oracle(f2, s, float(x), hw, 1e-5)
            assert objective(f2, s, x, out) <= objective(f2, s, x, ref) + 1e-8

    def test_prox_true_matches_oracle(self):
        fn = self.fn_without_kernels()
        rng = np.random.default_rng(5)
        u = rng.uniform(-4, 4, size=12)
        s = 0.37
        out = prox_true(fn, s, u)
        for i, ui in enumerate(u):
            ref = prox_oracle(fn.evaluate, s, float(ui), 3.0, 1e-5)
            assert objective(fn.evaluate, s, ui, out[i]) <= objective(fn.evaluate, s, ui, ref) + 1e-8


class TestInvariants:
    @pytest.mark.parametrize("factory,m", [
        (lambda: capped_l1(0.2, 1.0), 2),
        (lambda: capped_l1(0.2, 1.0), 1),
        (lambda: indicator_penalty(0.7, 0.3), 2),
        (lambda: l0_penalty(0.5), 2),
    ])
    def test_closed_form_never_loses_to_oracle(self, factory, m):
        # light version of the acceptance suite: 100 draws at 1e-4 resolution
        fn = factory()
        sur = fn.surrogate(m)
        jumps = tuple(sur.breakpoints()) if sur.jump_bound() > 0 else ()
        rng = np.random.default_rng(hash((m, fn.n_pieces)) % 2**32)
        for _ in range(100):
            s = rng.uniform(1e-3, 1.0)
            x = rng.uniform(-10.0, 10.0)
            hw = minimizer_halfwidth(sur.slope_bound(), sur.jump_bound(), jumps, s, x)
            closed = prox_surrogate(sur, s, float(x))
            ref = prox_oracle(sur, s, float(x), hw, 1e-4)
            assert objective(sur, s, x, closed) <= objective(sur, s, x, ref) + 1e-8

    def test_firm_nonexpansive_convex_kernels(self):
        fn = capped_l1(0.4, 1.5)
        rng = np.random.default_rng(9)
        for sur in (fn.surrogate(1), fn.surrogate(2)):
            for _ in range(300):
                s = rng.uniform(1e-3, 1.0)
                x, y = rng.uniform(-6, 6, size=2)
                px = prox_surrogate(sur, s, float(x))
                py = prox_surrogate(sur, s, float(y))
                assert abs(px - py) <= abs(x - y) + 1e-12
