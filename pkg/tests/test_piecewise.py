import json
import math

import numpy as np
import pytest

from piecewise_prox import (
    Constant,
    PieceSpec,
    PiecewiseBuildError,
    Quadratic,
    ScaledAbs,
    build_piecewise,
    capped_l1,
    from_json,
    indicator_penalty,
    l0_penalty,
    l1_penalty,
    leaky_capped_l1,
    to_json,
    zero_penalty,
)


from piecewise_prox import Affine


def quad_on_segments():
    """Generic continuous model: affine / quadratic bowl / affine with slope
    drops 1 and 1.5 at the breakpoints."""
    return build_piecewise(
        [
            PieceSpec(-math.inf, -1.0, Affine(-1.0, 0.0)),
            PieceSpec(-1.0, 1.0, Quadratic(1.0, 0.0, 0.0)),
            PieceSpec(1.0, math.inf, Affine(0.5, 0.5)),
        ],
        ["continuous", "continuous"],
    )


class TestBuild:
    def test_capped_l1_constants(self):
        fn = capped_l1(0.2, 1.0)
        C, J, F0, R0, s0 = fn.structural_constants()
        assert fn.n_pieces == 3
        # slope drop at +-b is lam - 0 on each side
        assert C == pytest.approx(0.2)
        assert math.isinf(J)
        assert F0 == pytest.approx(0.2)
        assert R0 == pytest.approx(2.0)
        assert s0 == pytest.approx(1.0)  # kink at 0, distance b from each cap

    def test_single_quadratic_piece(self):
        fn = build_piecewise([PieceSpec(-math.inf, math.inf, Quadratic(1.0, 0.0, 0.0))], [])
        C, J, F0, R0, s0 = fn.structural_constants()
        assert fn.n_pieces == 1
        assert math.isinf(R0)
        assert not fn.endpoints
        assert math.isinf(F0)  # unbounded slope tolerated only when M = 1

    def test_l0_constants(self):
        fn = l0_penalty(1.0)
        C, J, F0, R0, s0 = fn.structural_constants()
        assert math.isinf(C)
        assert J == pytest.approx(1.0)  # both one-sided jumps at the isolated origin
        assert F0 == 0.0
        assert math.isinf(R0)  # only nonzero-length pieces count

    def test_indicator_constants(self):
        fn = indicator_penalty(2.0, 1.0)
        C, J, F0, R0, s0 = fn.structural_constants()
        assert math.isinf(C)
        assert J == pytest.approx(2.0)
        assert math.isinf(R0)

    def test_leaky_slope_drop(self):
        fn = leaky_capped_l1(1.0, 1.0, 0.5)
        assert fn.C == pytest.approx(0.5)  # lam - beta at each cap
        assert fn.F0 == pytest.approx(1.0)

    def test_overlap_rejected(self):
        with pytest.raises(PiecewiseBuildError, match="overlap"):
            build_piecewise(
                [PieceSpec(-math.inf, 1.0, Constant(1.0)),
                 PieceSpec(0.5, math.inf, Constant(0.0))],
                ["right-only"],
            )

    def test_gap_rejected(self):
        with pytest.raises(PiecewiseBuildError, match="gap"):
            build_piecewise(
                [PieceSpec(-math.inf, 0.0, Constant(1.0)),
                 PieceSpec(1.0, math.inf, Constant(0.0))],
                ["right-only"],
            )

    def test_bad_tag_rejected(self):
        with pytest.raises(PiecewiseBuildError, match="continuity"):
            build_piecewise(
                [PieceSpec(-math.inf, 0.0, Constant(1.0)),
                 PieceSpec(0.0, math.inf, Constant(0.0))],
                ["sideways"],
            )

    def test_isolated_requires_point_piece(self):
        with pytest.raises(PiecewiseBuildError, match="isolated"):
            build_piecewise(
                [PieceSpec(-math.inf, 0.0, Constant(1.0)),
                 PieceSpec(0.0, math.inf, Constant(0.0))],
                ["isolated"],
            )

    def test_nonconvex_evaluator_rejected(self):
        with pytest.raises(PiecewiseBuildError, match="convex"):
            build_piecewise(
                [PieceSpec(-math.inf, 0.0, Constant(1.0)),
                 PieceSpec(0.0, math.inf, Quadratic(-1.0, 0.0, 0.0))],
                ["right-only"],
            )

    def test_nonconvex_callable_rejected_by_probe(self):
        with pytest.raises(PiecewiseBuildError, match="convexity probe"):
            build_piecewise(
                [PieceSpec(-math.inf, 0.0, Constant(2.0)),
                 PieceSpec(0.0, math.inf, lambda v: np.sin(3.0 * np.asarray(v)))],
                ["right-only"],
            )

    def test_nonpositive_slope_drop_rejected(self):
        # slope increases across the breakpoint: no negative curvature
        with pytest.raises(PiecewiseBuildError, match="not positive"):
            build_piecewise(
                [PieceSpec(-math.inf, 0.0, Quadratic(0.1, 0.0, 0.0)),
                 PieceSpec(0.0, math.inf, Quadratic(1.0, 0.0, 0.0))],
                ["continuous"],
            )

    def test_continuous_tag_with_jump_rejected(self):
        with pytest.raises(PiecewiseBuildError, match="limits differ"):
            build_piecewise(
                [PieceSpec(-math.inf, 0.0, Constant(1.0)),
                 PieceSpec(0.0, math.inf, Constant(0.0))],
                ["continuous"],
            )

    def test_discontinuous_tag_without_jump_rejected(self):
        with pytest.raises(PiecewiseBuildError, match="limits agree"):
            build_piecewise(
                [PieceSpec(-math.inf, 0.0, ScaledAbs(1.0)),
                 PieceSpec(0.0, math.inf, ScaledAbs(1.0))],
                ["right-only"],
            )

    def test_lsc_violation_rejected(self):
        # left-continuous value above the right limit
        with pytest.raises(PiecewiseBuildError, match="semicontinuity"):
            build_piecewise(
                [PieceSpec(-math.inf, 0.0, Constant(1.0)),
                 PieceSpec(0.0, math.inf, Constant(0.0))],
                ["left-only"],
            )

    def test_unbounded_slope_rejected_when_multiple_pieces(self):
        with pytest.raises(PiecewiseBuildError, match="unbounded"):
            build_piecewise(
                [PieceSpec(-math.inf, 1.0, Quadratic(1.0, 0.0, 0.0)),
                 PieceSpec(1.0, math.inf, Affine(0.5, 0.5))],
                ["continuous"],
            )

    def test_decreasing_slope_metadata_rejected(self):
        with pytest.raises(PiecewiseBuildError, match="contradicting convexity"):
            build_piecewise(
                [PieceSpec(-math.inf, -1.0, Affine(-1.0, 0.0)),
                 PieceSpec(-1.0, 1.0, Quadratic(1.0, 0.0, 0.0),
                           left_slope=2.0, right_slope=-2.0),
                 PieceSpec(1.0, math.inf, Affine(0.5, 0.5))],
                ["continuous", "continuous"],
            )


class TestMembership:
    def test_capped_l1_endpoint_ownership(self):
        fn = capped_l1(0.2, 1.0)
        assert fn.piece_index(-1.0) == 1  # continuous endpoint joins the left piece
        assert fn.piece_index(0.0) == 2
        assert fn.piece_index(1.0) == 2
        assert fn.piece_index(1.0 + 1e-12) == 3

    def test_indicator_right_continuity(self):
        fn = indicator_penalty(2.0, 1.0)
        assert fn.piece_index(1.0) == 2
        assert fn.piece_index(1.0 - 1e-12) == 1

    def test_l0_point_piece(self):
        fn = l0_penalty(1.0)
        assert fn.piece_index(0.0) == 2
        assert fn.piece_index(-1e-300) == 1
        assert fn.piece_index(1e-300) == 3

    @pytest.mark.parametrize("fn_factory", [
        lambda: capped_l1(0.2, 1.0),
        lambda: indicator_penalty(2.0, 1.0),
        lambda: l0_penalty(1.0),
        lambda: leaky_capped_l1(1.0, 1.0, 0.5),
        lambda: l1_penalty(0.3),
        quad_on_segments,
    ])
    def test_tiling(self, fn_factory):
        fn = fn_factory()
        rng = np.random.default_rng(0)
        pts = [rng.uniform(-10, 10, size=10_000)]
        for e in fn.endpoints:
            q = e.value
            ulp = np.spacing(abs(q) + 1.0)
            pts.append(np.array([q, q - ulp, q + ulp, q - 1e3 * ulp, q + 1e3 * ulp]))
        pts = np.concatenate(pts)
        counts = fn.claim_count(pts)
        assert np.all(counts == 1)
        idx = fn.piece_index(pts)
        assert np.all((idx >= 1) & (idx <= fn.n_pieces))


class TestEvaluate:
    def test_capped_values(self):
        fn = capped_l1(0.2, 1.0)
        assert fn.evaluate(0.5) == pytest.approx(0.1)
        assert fn.evaluate(3.0) == pytest.approx(0.2)

    def test_indicator_values(self):
        fn = indicator_penalty(2.0, 1.0)
        assert fn.evaluate(0.5) == pytest.approx(2.0)
        assert fn.evaluate(1.0) == 0.0

    def test_dispatch_matches_piece_evaluators(self):
        fn = leaky_capped_l1(1.0, 2.0, 0.25)
        for m, p in enumerate(fn.pieces, start=1):
            lo = max(p.left, -50.0)
            hi = min(p.right, 50.0)
            grid = np.linspace(lo + 1e-6, hi - 1e-6, 100)
            assert np.array_equal(fn.evaluate(grid), np.asarray(p.shape(grid)))


class TestSurrogates:
    def test_capped_middle_is_global_abs(self):
        fn = capped_l1(0.2, 1.0)
        f2 = fn.surrogate(2)
        grid = np.linspace(-7, 7, 301)
        # the linear extension equals 0.2|x| mathematically; last-ulp rounding differs
        assert np.allclose(f2(grid), 0.2 * np.abs(grid), rtol=0, atol=1e-14)
        assert f2.kernel.kind == "soft-threshold"

    def test_capped_outer_is_constant(self):
        fn = capped_l1(0.2, 1.0)
        for m in (1, 3):
            fm = fn.surrogate(m)
            grid = np.linspace(-5, 5, 101)
            assert np.all(fm(grid) == 0.2)

    def test_indicator_first_surrogate_constant(self):
        fn = indicator_penalty(1.5, 0.0)
        f1 = fn.surrogate(1)
        assert np.all(f1(np.linspace(-4, 4, 51)) == 1.5)

    def test_l0_point_surrogate_third_branch(self):
        fn = l0_penalty(1.0)
        f2 = fn.surrogate(2)
        assert f2.left_case == "constant-limit"
        assert f2.right_case == "constant-limit"
        assert not f2.is_convex
        assert f2(0.0) == 0.0
        assert f2(0.7) == 1.0 and f2(-0.7) == 1.0

    def test_agreement_on_source_piece_is_exact(self):
        for fn in (capped_l1(0.2, 1.0), indicator_penalty(2.0, 1.0),
                   leaky_capped_l1(1.0, 1.0, 0.5), quad_on_segments()):
            for m in range(1, fn.n_pieces + 1):
                lo, hi = fn.piece_bounds(m)
                lo = max(lo, -20.0)
                hi = min(hi, 20.0)
                if hi < lo:
                    continue
                grid = np.linspace(lo, hi, 1000) if hi > lo else np.array([lo])
                idx = fn.piece_index(grid)
                on_piece = grid[idx == m]
                fm = fn.surrogate(m)
                assert np.array_equal(fm(on_piece), fn.evaluate(on_piece))

    def test_linearity_outside_source_piece(self):
        fn = quad_on_segments()
        f2 = fn.surrogate(2)
        grid = np.linspace(1.5, 9.5, 200)  # strictly right of piece 2
        vals = f2(grid)
        second = np.diff(vals, 2)
        assert np.max(np.abs(second)) < 1e-9
        slope = (vals[1] - vals[0]) / (grid[1] - grid[0])
        assert slope == pytest.approx(fn.pieces[1].right_slope, abs=1e-9)
        grid_l = np.linspace(-9.5, -1.5, 200)
        vals_l = f2(grid_l)
        assert np.max(np.abs(np.diff(vals_l, 2))) < 1e-9
        slope_l = (vals_l[1] - vals_l[0]) / (grid_l[1] - grid_l[0])
        assert slope_l == pytest.approx(fn.pieces[1].left_slope, abs=1e-9)

    def test_negative_curvature_audit(self):
        for fn in (capped_l1(0.2, 1.0), leaky_capped_l1(1.0, 1.0, 0.5), quad_on_segments()):
            gaps = []
            for j, e in enumerate(fn.endpoints):
                if e.is_continuous:
                    gaps.append(fn.pieces[j].right_slope - fn.pieces[j + 1].left_slope)
            assert min(gaps) == pytest.approx(fn.C)
            assert all(g >= fn.C - 1e-12 for g in gaps)

    def test_convexity_probe_property(self):
        for fn in (capped_l1(0.4, 2.0), leaky_capped_l1(2.0, 0.5, 0.1), quad_on_segments()):
            for p in fn.pieces:
                if p.is_point:
                    continue
                lo = max(p.left, -1e6)
                hi = min(p.right, 1e6)
                grid = np.linspace(lo, hi, 1000)
                vals = np.asarray(p.shape(grid))
                assert np.min(vals[2:] - 2 * vals[1:-1] + vals[:-2]) >= -1e-10 * max(1.0, np.abs(vals).max())

    def test_index_out_of_range(self):
        fn = capped_l1(0.2, 1.0)
        with pytest.raises(IndexError):
            fn.surrogate(4)


class TestSlopeEstimation:
    def test_custom_piece_slopes_estimated(self):
        # piece evaluator exp(x) on (-inf, 0]: slope at 0- is 1
        fn = build_piecewise(
            [
                PieceSpec(-math.inf, 0.0, lambda v: np.exp(np.asarray(v, dtype=float)),
                          left_slope=0.0),
                PieceSpec(0.0, math.inf, Affine(0.2, 1.0)),
            ],
            ["continuous"],
        )
        assert fn.pieces[0].right_slope == pytest.approx(1.0, abs=1e-6)
        assert fn.C == pytest.approx(1.0 - 0.2, abs=1e-6)


class TestJson:
    @pytest.mark.parametrize("fn_factory", [
        lambda: capped_l1(0.2, 1.0),
        lambda: indicator_penalty(2.0, 1.0),
        lambda: leaky_capped_l1(1.0, 1.0, 0.5),
        lambda: l0_penalty(0.7),
        lambda: l1_penalty(0.3),
        lambda: zero_penalty(),
    ])
    def test_builtin_round_trip(self, fn_factory):
        fn = fn_factory()
        clone = from_json(to_json(fn))
        assert clone.structural_constants() == fn.structural_constants()
        grid = np.linspace(-4, 4, 101)
        assert np.array_equal(clone.evaluate(grid), fn.evaluate(grid))

    def test_shape_pieces_round_trip(self):
        fn = quad_on_segments()
        text = to_json(fn)
        clone = from_json(text)
        grid = np.linspace(-5, 5, 101)
        assert np.allclose(clone.evaluate(grid), fn.evaluate(grid), rtol=0, atol=0)

    def test_tagged_records_present(self):
        doc = json.loads(to_json(capped_l1(0.2, 1.0)))
        assert doc["builtin"]["kind"] == "capped-l1"
        assert [p["shape"]["tag"] for p in doc["pieces"]] == ["constant", "scaled-abs", "constant"]

    def test_custom_not_serializable(self):
        fn = build_piecewise(
            [PieceSpec(-math.inf, math.inf, lambda v: np.abs(np.asarray(v)))], []
        )
        with pytest.raises(PiecewiseBuildError, match="serializable"):
            to_json(fn)
