import dataclasses
import math
import random
from fractions import Fraction

import pytest

from flcap.capacity_engine import (
    GapVerdict,
    HalfPlane,
    PointToPointError,
    RateCountError,
    approximate_capacity,
    capacity_at_grid,
    clip_halfplane,
    gamma,
    gap_decide,
    grid_budget,
    intersect_halfplanes,
    normalize_point_to_point,
    region_2user,
)
from flcap.feasibility_grid import GridCapError, build_feasible_set, lattice_net
from flcap.flc_model import (
    Inequality,
    MITerm,
    RateTerm,
    builtin_dmc,
    builtin_han_kobayashi,
    builtin_marton,
)
from flcap.polynomial import Polynomial
from flcap.prob_core import IndexSet, channel_from_flat
from helpers import (
    bec_channel,
    bsc_capacity,
    bsc_channel,
    noiseless_binary_channel,
    useless_channel,
)
from test_flc_model import hk_channel, marton_channel

F = Fraction


def z_channel(flip=F(1, 4)):
    """x=0 passes clean; x=1 flips to 0 with probability `flip`."""
    return channel_from_flat([2, 1], [1, 2], 1, [F(1), flip, F(0), 1 - flip])


def z_channel_capacity_scan(flip: float, steps: int = 200_000) -> float:
    """Independent oracle: fine scan of I(p) for the Z-channel."""
    best = 0.0
    for k in range(1, steps):
        p1 = k / steps
        py1 = p1 * (1 - flip)
        if py1 in (0.0, 1.0):
            continue
        hy = -(py1 * math.log(py1) + (1 - py1) * math.log(1 - py1))
        # H(Y|X) = p1 * h(flip)
        hyx = p1 * -(flip * math.log(flip) + (1 - flip) * math.log(1 - flip)) if flip else 0.0
        best = max(best, hy - hyx)
    return best


class TestGamma:
    def test_bsc_quarter_m200(self):
        flc = builtin_dmc(2, 2)
        channel = bsc_channel(F(1, 4))
        feasible = build_feasible_set(flc, channel, lattice_net(flc.alphabets, 200))
        result = gamma(flc, channel, feasible)
        assert abs(result.gamma - bsc_capacity(0.25)) <= 2e-3
        assert result.gamma == min(result.argmax_values)
        assert result.unknown_fraction == 0.0

    def test_useless_channel_gamma_zero(self):
        flc = builtin_dmc(2, 2)
        channel = useless_channel([F(1, 2), F(1, 2)])
        feasible = build_feasible_set(flc, channel, lattice_net(flc.alphabets, 50))
        assert gamma(flc, channel, feasible).gamma == 0.0

    def test_noiseless_m200(self):
        flc = builtin_dmc(2, 2)
        channel = noiseless_binary_channel()
        feasible = build_feasible_set(flc, channel, lattice_net(flc.alphabets, 200))
        assert abs(gamma(flc, channel, feasible).gamma - math.log(2)) <= 2e-3

    def test_empty_feasible_set_flagged(self):
        flc = builtin_dmc(2, 2)
        bad = dataclasses.replace(
            flc,
            constraints=tuple(list(flc.constraints) + [Polynomial.p_var(0) - Polynomial.constant(2)]),
            structured=None,
        )
        channel = bsc_channel(F(1, 4))
        feasible = build_feasible_set(bad, channel, lattice_net(flc.alphabets, 4))
        result = gamma(bad, channel, feasible)
        assert result.empty
        assert result.gamma == 0.0

    def test_membership_filter_restricts(self):
        flc = builtin_dmc(2, 2)
        # extra rate-free inequality I(X;Y) <= 0 keeps only zero-MI members
        filter_ineq = Inequality(
            rate_terms=(),
            mi_terms=(MITerm(F(1), IndexSet.of(0), IndexSet.of(1), IndexSet.of()),),
            relation="<=",
        )
        constrained = dataclasses.replace(
            flc, representation=flc.representation + (filter_ineq,)
        )
        channel = bsc_channel(F(1, 4))
        feasible = build_feasible_set(constrained, channel, lattice_net(flc.alphabets, 20))
        assert gamma(constrained, channel, feasible).gamma == 0.0

    def test_harmless_filter_keeps_gamma(self):
        flc = builtin_dmc(2, 2)
        filter_ineq = Inequality(
            rate_terms=(),
            mi_terms=(MITerm(F(-1), IndexSet.of(0), IndexSet.of(1), IndexSet.of()),),
            relation="<=",
        )
        loosened = dataclasses.replace(
            flc, representation=flc.representation + (filter_ineq,)
        )
        channel = bsc_channel(F(1, 4))
        grid = lattice_net(flc.alphabets, 50)
        base = gamma(flc, channel, build_feasible_set(flc, channel, grid)).gamma
        same = gamma(loosened, channel, build_feasible_set(loosened, channel, grid)).gamma
        assert base == same


class TestNormalization:
    def test_rejects_rate_lower_bound(self):
        flc = builtin_dmc(2, 2)
        lower = Inequality(
            rate_terms=(RateTerm(1, 2, F(-1)),),
            mi_terms=(MITerm(F(1), IndexSet.of(0), IndexSet.of(1), IndexSet.of()),),
            relation="<=",
        )
        bad = dataclasses.replace(flc, representation=(lower,))
        with pytest.raises(PointToPointError, match="lower-bound"):
            normalize_point_to_point(bad)

    def test_rejects_two_rate_symbols(self):
        with pytest.raises(PointToPointError):
            normalize_point_to_point(builtin_marton(2, 2, 2, 2))

    def test_beta_scaling_normalizes(self):
        flc = builtin_dmc(2, 2)
        scaled = Inequality(
            rate_terms=(RateTerm(1, 2, F(3)),),
            mi_terms=(MITerm(F(-3), IndexSet.of(0), IndexSet.of(1), IndexSet.of()),),
            relation="<",
        )
        flc2 = dataclasses.replace(flc, representation=(scaled,))
        channel = bsc_channel(F(1, 4))
        grid = lattice_net(flc.alphabets, 40)
        a = gamma(flc, channel, build_feasible_set(flc, channel, grid)).gamma
        b = gamma(flc2, channel, build_feasible_set(flc2, channel, grid)).gamma
        assert a == pytest.approx(b, abs=1e-15)


class TestApproximateCapacity:
    def test_bsc_11(self):
        est = approximate_capacity(builtin_dmc(2, 2), bsc_channel(F(11, 100)), 0.01)
        closed = bsc_capacity(0.11)
        assert abs(est.beta - closed) <= 0.01
        assert est.error_breakdown.grid <= 0.005
        assert est.error_breakdown.grid + est.error_breakdown.numeric <= est.epsilon
        assert est.mode == "structured"
        assert est.error_breakdown.eta_slack == 0.0

    def test_bec_half(self):
        est = approximate_capacity(builtin_dmc(2, 3), bec_channel(F(1, 2)), 0.01)
        assert abs(est.beta - 0.5 * math.log(2)) <= 0.01

    def test_epsilon_zero_rejected(self):
        with pytest.raises(ValueError):
            approximate_capacity(builtin_dmc(2, 2), bsc_channel(F(1, 4)), 0.0)

    def test_generic_mode_hits_grid_cap_at_tight_epsilon(self):
        flc = dataclasses.replace(builtin_dmc(2, 2), structured=None)
        with pytest.raises(GridCapError, match="epsilon"):
            approximate_capacity(flc, bsc_channel(F(1, 4)), 0.01)

    def test_deterministic_repeat(self):
        flc = builtin_dmc(2, 2)
        a = approximate_capacity(flc, bsc_channel(F(1, 4)), 0.05)
        b = approximate_capacity(flc, bsc_channel(F(1, 4)), 0.05)
        assert a.beta == b.beta
        assert a.delta_used == b.delta_used


class TestMonotoneRefinement:
    def test_gamma_nondecreasing_on_doubling(self):
        flc = builtin_dmc(2, 2)
        channel = z_channel()  # optimum input is off-lattice, so refinement bites
        values = [
            capacity_at_grid(flc, channel, m, mode="structured").beta
            for m in (5, 10, 20, 40, 80)
        ]
        for coarse, fine in zip(values, values[1:]):
            assert fine >= coarse
        assert values[-1] > values[0]  # strictly improves somewhere

    def test_z_channel_approaches_scan_oracle(self):
        flc = builtin_dmc(2, 2)
        channel = z_channel()
        est = capacity_at_grid(flc, channel, 400, mode="structured")
        oracle = z_channel_capacity_scan(0.25)
        assert est.beta <= oracle + 1e-9
        assert oracle - est.beta <= est.error_breakdown.grid

    def test_sandwich_with_reported_budget(self):
        flc = builtin_dmc(2, 2)
        for m in (4, 10, 25):
            est = capacity_at_grid(flc, bsc_channel(F(1, 4)), m, mode="structured")
            closed = bsc_capacity(0.25)
            assert est.beta <= closed + 1e-9
            assert closed - est.beta <= est.error_breakdown.grid + est.error_breakdown.numeric


class TestGapDecide:
    def test_useless_channel_low_side(self):
        decision = gap_decide(builtin_dmc(2, 2), useless_channel([F(1, 2), F(1, 2)]), 0.4)
        assert decision.verdict is GapVerdict.AT_MOST_HALF
        assert decision.estimate.beta <= 0.22

    def test_noiseless_high_side(self):
        decision = gap_decide(builtin_dmc(2, 2), noiseless_binary_channel(), 0.6)
        assert decision.verdict is GapVerdict.AT_LEAST_LAMBDA

    def test_broken_promise_still_answers(self):
        # capacity 0.1308 lies inside (lambda/2, lambda) = (0.13, 0.26):
        # the promise is broken, the verdict is unspecified but deterministic
        decision = gap_decide(builtin_dmc(2, 2), bsc_channel(F(1, 4)), 0.26)
        assert decision.verdict in (GapVerdict.AT_MOST_HALF, GapVerdict.AT_LEAST_LAMBDA)
        again = gap_decide(builtin_dmc(2, 2), bsc_channel(F(1, 4)), 0.26)
        assert decision.verdict is again.verdict

    def test_lambda_domain(self):
        with pytest.raises(ValueError):
            gap_decide(builtin_dmc(2, 2), bsc_channel(F(1, 4)), 0.0)


class TestPolygonGeometry:
    def test_single_halfplane_triangle(self):
        plane = HalfPlane(1.0, 1.0, (), ())
        poly, unbounded = intersect_halfplanes([math.log(2)], [plane], bound=4.0)
        assert not unbounded
        assert len(poly) == 3
        expected = {(0.0, 0.0), (math.log(2), 0.0), (0.0, math.log(2))}
        for vertex in poly:
            assert any(abs(vertex[0] - ex) < 1e-12 and abs(vertex[1] - ey) < 1e-12 for ex, ey in expected)

    def test_clip_preserves_ccw_convexity(self):
        square = [(0.0, 0.0), (2.0, 0.0), (2.0, 2.0), (0.0, 2.0)]
        poly = clip_halfplane(square, 1.0, 0.0, 1.0)  # x <= 1
        assert poly == [(0.0, 0.0), (1.0, 0.0), (1.0, 2.0), (0.0, 2.0)]

    def test_empty_clip(self):
        square = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]
        assert clip_halfplane(square, 1.0, 0.0, -1.0) == []


def _ccw_convex(vertices, tol=1e-9):
    n = len(vertices)
    if n < 3:
        return True
    for i in range(n):
        ax, ay = vertices[i]
        bx, by = vertices[(i + 1) % n]
        cx, cy = vertices[(i + 2) % n]
        cross = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
        if cross < -tol:
            return False
    return True


class TestRegion2User:
    def test_marton_deterministic_broadcast_small(self):
        flc = builtin_marton(2, 2, 2, 2)
        region = region_2user(flc, marton_channel(), m=10)
        assert abs(region.max_sum_rate() - math.log(2)) <= 0.05
        limit = math.log(2) + 1e-9
        for member in region.members:
            assert not member.unbounded
            assert _ccw_convex([(v.r1, v.r2) for v in member.vertices])
            for v in member.vertices:
                assert -1e-12 <= v.r1 <= limit
                assert -1e-12 <= v.r2 <= limit

    def test_hk_useless_channel_origin_only(self):
        flc = builtin_han_kobayashi(1, 1, 1, 2, 2, 2, 2)
        region = region_2user(flc, hk_channel(), m=2)
        assert region.members
        for member in region.members:
            for v in member.vertices:
                assert abs(v.r1) <= 1e-9 and abs(v.r2) <= 1e-9

    def test_support_fan_shape(self):
        flc = builtin_marton(2, 2, 2, 2)
        region = region_2user(flc, marton_channel(), m=4, n_directions=16)
        assert len(region.support) == 16
        # support in direction (1,0) equals the best achievable R1
        best_r1 = max(v.r1 for member in region.members for v in member.vertices)
        assert region.support[0][2] == pytest.approx(best_r1, abs=1e-12)

    def test_rate_count_error(self):
        with pytest.raises(RateCountError):
            region_2user(builtin_dmc(2, 2), bsc_channel(F(1, 4)), m=4)

    def test_unbounded_flagged(self):
        flc = builtin_marton(2, 2, 2, 2)
        # drop every inequality that upper-bounds R2 on its own: keep only
        # R1 <= H(Y1) and add R1 - R2 <= H(Y1), leaving +R2 unconstrained
        open_ineq = Inequality(
            rate_terms=(RateTerm(1, 2, F(1)), RateTerm(1, 3, F(-1))),
            mi_terms=flc.representation[0].mi_terms,
            relation="<=",
        )
        opened = dataclasses.replace(
            flc, representation=(flc.representation[0], open_ineq)
        )
        region = region_2user(opened, marton_channel(), m=2)
        assert any(member.unbounded for member in region.members)


class TestGridBudgetHelpers:
    def test_budget_monotone(self):
        flc = builtin_dmc(2, 2)
        bounds, _ = normalize_point_to_point(flc)
        values = [grid_budget(flc, bounds, l1) for l1 in (1e-4, 1e-3, 1e-2, 0.1, 0.4)]
        assert values == sorted(values)
        assert grid_budget(flc, bounds, 0.0) == 0.0
