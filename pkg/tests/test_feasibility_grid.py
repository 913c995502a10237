import math
import random
from fractions import Fraction

import pytest

from flcap.feasibility_grid import (
    GridCapError,
    Status,
    build_delta_net,
    build_feasible_set,
    check_box,
    enumerate_lattice,
    iter_structured_joints,
    lattice_net,
    lattice_size,
    round_to_lattice,
)
from flcap.flc_model import builtin_dmc
from flcap.polynomial import Polynomial, eval_poly
from flcap.prob_core import Alphabet, validate_distribution
from helpers import bsc_channel, dist, l1, random_rational_dist

F = Fraction


def binary_alphabets():
    return (Alphabet("X", 2),)


class TestLattice:
    def test_net_g2_delta_3_tenths(self):
        net = build_delta_net(binary_alphabets(), F(3, 10))
        assert net.m == 14
        assert len(net.points) == 15

    def test_net_g3_delta_half(self):
        net = build_delta_net((Alphabet("X", 3),), F(1, 2))
        assert net.m == 12
        assert len(net.points) == math.comb(14, 2) == 91

    def test_m4_lattice_gap(self):
        # denominator-4 lattice on the 1-simplex: worst L1 gap is 1/4,
        # attained at the midpoints k/4 + 1/8 (the 1/200 sample grid hits them)
        net = lattice_net(binary_alphabets(), 4)
        worst = F(0)
        for k in range(0, 201):
            s = (F(k, 200), F(200 - k, 200))
            nearest = min(
                (sum((abs(a - b) for a, b in zip(s, pt.probs)), F(0)) for pt in net.points)
            )
            worst = max(worst, nearest)
        assert worst == F(1, 4)

    def test_every_point_valid(self):
        net = build_delta_net((Alphabet("X", 2), Alphabet("Y", 2)), F(1, 2))
        for pt in net.points:
            assert validate_distribution(pt) is None
            assert all(p.denominator in (1, net.m) or net.m % p.denominator == 0 for p in pt.probs)

    def test_count_formula(self):
        assert lattice_size(14, 2) == 15
        assert lattice_size(12, 3) == 91
        assert sum(1 for _ in enumerate_lattice(5, 3)) == lattice_size(5, 3)

    def test_rounding_respects_net_property(self):
        rng = random.Random(61)
        for cells, delta in ((2, F(3, 10)), (3, F(1, 2)), (4, F(1, 2))):
            alphabets = (Alphabet("X", cells),)
            net = build_delta_net(alphabets, delta)
            for _ in range(2000):
                s = random_rational_dist(rng, cells, max_num=200)
                rounded = round_to_lattice(s, net.m)
                assert sum(rounded, F(0)) == 1
                assert l1(s, rounded) < delta
                # the rounded point is itself a member of the net
                assert net.points[net.point_index(rounded)].probs == rounded

    def test_nested_lattices(self):
        coarse = lattice_net(binary_alphabets(), 6)
        fine = lattice_net(binary_alphabets(), 12)
        fine_points = {pt.probs for pt in fine.points}
        assert all(pt.probs in fine_points for pt in coarse.points)

    def test_cap_error(self):
        with pytest.raises(GridCapError):
            build_delta_net((Alphabet("X", 4),), F(1, 1000), cap=1000)

    def test_delta_domain(self):
        with pytest.raises(ValueError):
            build_delta_net(binary_alphabets(), F(0))


class TestCheckBox:
    def test_simplex_constraint_feasible_at_u(self):
        f = Polynomial.p_var(0) + Polynomial.p_var(1) - Polynomial.constant(1)
        u = dist([2], [F(1, 3), F(2, 3)])
        verdict = check_box([f], u, F(1, 4), F(1, 100))
        assert verdict.status is Status.FEASIBLE
        assert verdict.witness == u.probs
        assert verdict.residual == 0

    def test_unsatisfiable_constant_infeasible_at_root(self):
        f = Polynomial.p_var(0) - Polynomial.constant(2)
        u = dist([2], [F(1, 2), F(1, 2)])
        verdict = check_box([f], u, F(1, 4), F(1, 100))
        assert verdict.status is Status.INFEASIBLE
        assert verdict.certificate >= 1.0  # p0 <= 1 keeps |p0 - 2| >= 1

    def test_interval_exclusion(self):
        f = Polynomial.p_var(0) - Polynomial.constant(F(1, 2))
        u = dist([2], [F(1, 4), F(3, 4)])
        verdict = check_box([f], u, F(1, 10), F(1, 1000))
        assert verdict.status is Status.INFEASIBLE
        assert verdict.certificate > 0.1

    def test_feasible_witness_found_off_center(self):
        # constraint pins p0 = 0; u is off by delta, witness must move
        f = Polynomial.p_var(0)
        u = dist([2], [F(1, 4), F(3, 4)])
        verdict = check_box([f], u, F(1, 4), F(1, 10**9))
        assert verdict.status is Status.FEASIBLE
        assert verdict.witness[0] == 0
        assert sum(verdict.witness, F(0)) == 1

    def test_unknown_when_zero_set_is_thin(self):
        # p0 = 1/7 has solutions in the box but no candidate hits it exactly
        f = Polynomial.p_var(0) - Polynomial.constant(F(1, 7))
        u = dist([2], [F(1, 4), F(3, 4)])
        verdict = check_box([f], u, F(1, 4), F(1, 10**12), max_depth=6)
        assert verdict.status is Status.UNKNOWN

    def test_eta_must_be_positive(self):
        with pytest.raises(ValueError):
            check_box([], dist([2], [F(1, 2), F(1, 2)]), F(1, 4), F(0))


class TestFeasibleSet:
    def test_structured_dmc_m10(self):
        flc = builtin_dmc(2, 2)
        channel = bsc_channel(F(1, 4))
        grid = lattice_net(flc.alphabets, 10)
        feasible = build_feasible_set(flc, channel, grid)
        assert feasible.mode == "structured"
        assert len(feasible.members) == 11  # one joint per p_X lattice point
        assert feasible.unknown == frozenset()
        q = channel.kernel
        for joint in feasible.joints:
            assert validate_distribution(joint) is None
            for poly in flc.constraints:
                assert eval_poly(poly, joint.probs, q) == 0

    def test_generic_empty_when_unsatisfiable(self):
        flc = builtin_dmc(2, 2)
        bad = tuple(
            list(flc.constraints) + [Polynomial.p_var(0) - Polynomial.constant(2)]
        )
        import dataclasses

        flc_bad = dataclasses.replace(flc, constraints=bad, structured=None)
        grid = lattice_net(flc_bad.alphabets, 4)
        feasible = build_feasible_set(flc_bad, bsc_channel(F(1, 4)), grid)
        assert feasible.members == ()

    def test_point_mass_box_geometry(self):
        # constraints force p = point mass at cell 0; membership is exactly
        # the sup-norm ball of radius delta (+ eta slack on the witness)
        import dataclasses

        flc = builtin_dmc(2, 2)
        constraints = (Polynomial.p_var(1),)  # p1 = 0 pins the mass on cell 0
        flc_pm = dataclasses.replace(
            flc,
            alphabets=(Alphabet("X", 2),),
            constraints=constraints,
            structured=None,
        )
        grid = lattice_net(flc_pm.alphabets, 8)  # delta = 2*2/8 = 1/2
        eta = F(1, 16)
        feasible = build_feasible_set(flc_pm, bsc_channel(F(1, 4)), grid, eta=eta)
        delta = grid.delta
        expected = {
            idx
            for idx, pt in enumerate(grid.points)
            if pt.probs[1] <= delta + eta
        }
        assert set(feasible.members) == expected

    def test_structured_iteration_deterministic(self):
        flc = builtin_dmc(2, 2)
        channel = bsc_channel(F(1, 4))
        first = [(i, j.probs) for i, j in iter_structured_joints(flc, channel, 7)]
        second = [(i, j.probs) for i, j in iter_structured_joints(flc, channel, 7)]
        assert first == second

    def test_structured_cap(self):
        flc = builtin_dmc(2, 2)
        with pytest.raises(GridCapError):
            list(iter_structured_joints(flc, bsc_channel(F(1, 4)), 10, cap=5))


class TestInfeasibleSoundness:
    def test_no_sample_beats_certificate(self):
        rng = random.Random(71)
        infeasible_seen = 0
        for _ in range(60):
            n = rng.choice([2, 3])
            u = dist([n], random_rational_dist(rng, n, max_num=12))
            # anchor a linear constraint away from the box half the time
            shift = F(rng.randint(-3, 3), 4)
            f = Polynomial.p_var(rng.randrange(n)) - Polynomial.constant(shift)
            delta = F(1, rng.choice([4, 8]))
            verdict = check_box([f], u, delta, delta * delta, max_depth=8)
            if verdict.status is not Status.INFEASIBLE:
                continue
            infeasible_seen += 1
            lo = [max(F(0), p - delta) for p in u.probs]
            hi = [min(F(1), p + delta) for p in u.probs]
            for _ in range(200):
                point = [
                    a + (b - a) * F(rng.randint(0, 32), 32) for a, b in zip(lo, hi)
                ]
                total = sum(point, F(0))
                if total == 0:
                    continue
                point = [p / total for p in point]  # project to the simplex
                if any(p < a or p > b for p, a, b in zip(point, lo, hi)):
                    continue  # left the box; certificate says nothing there
                assert abs(eval_poly(f, point)) >= F(verdict.certificate)
        assert infeasible_seen >= 10
