import random
from fractions import Fraction

import pytest

from flcap.polynomial import (
    Interval,
    Monomial,
    Polynomial,
    eval_poly,
    interval_eval,
    polynomial_from_json,
    polynomial_to_json,
    substitute_q,
)

F = Fraction


def simplex_poly():
    # p0 + p1 - 1
    return Polynomial.p_var(0) + Polynomial.p_var(1) - Polynomial.constant(1)


def random_poly(rng: random.Random, n_p: int = 3, n_q: int = 2) -> Polynomial:
    monos = []
    for _ in range(rng.randint(1, 5)):
        coeff = F(rng.randint(-8, 8), rng.randint(1, 5))
        if coeff == 0:
            coeff = F(1)
        p_exp = {i: rng.randint(1, 3) for i in rng.sample(range(n_p), rng.randint(0, n_p))}
        q_exp = {i: rng.randint(1, 2) for i in rng.sample(range(n_q), rng.randint(0, n_q))}
        monos.append(Monomial.make(coeff, p_exp, q_exp))
    return Polynomial.from_monomials(monos)


class TestEval:
    def test_simplex_at_uniform(self):
        assert eval_poly(simplex_poly(), [F(1, 2), F(1, 2)]) == 0

    def test_pq_mixed(self):
        f = Polynomial.p_var(0) * Polynomial.q_var(0) - Polynomial.p_var(1)
        assert eval_poly(f, [F(1, 3), F(1, 6)], [F(1, 2)]) == 0

    def test_square(self):
        f = Polynomial.p_var(0) * Polynomial.p_var(0)
        assert eval_poly(f, [F(2, 3)]) == F(4, 9)

    def test_index_out_of_range(self):
        with pytest.raises(IndexError):
            eval_poly(Polynomial.p_var(3), [F(1)])


class TestCanonicalForm:
    def test_duplicates_merge(self):
        f = Polynomial.from_monomials(
            [Monomial.make(F(1, 2), {0: 1}), Monomial.make(F(1, 3), {0: 1})]
        )
        assert len(f.monomials) == 1
        assert f.monomials[0].coefficient == F(5, 6)

    def test_zeros_drop(self):
        f = Polynomial.p_var(0) - Polynomial.p_var(0)
        assert f.monomials == ()

    def test_json_round_trip(self):
        rng = random.Random(17)
        for _ in range(200):
            f = random_poly(rng)
            assert polynomial_from_json(polynomial_to_json(f)) == f

    def test_sum_is_order_independent(self):
        a = Polynomial.p_var(0) * Polynomial.q_var(1)
        b = Polynomial.constant(F(2, 7))
        assert a + b == b + a


class TestSubstituteQ:
    def test_example(self):
        f = Polynomial.p_var(0) * Polynomial.q_var(0) - Polynomial.p_var(1)
        g = substitute_q(f, [F(1, 2)])
        assert g == Polynomial.p_var(0).scale(F(1, 2)) - Polynomial.p_var(1)
        assert g.is_p_only()

    def test_no_q_unchanged(self):
        f = simplex_poly()
        assert substitute_q(f, []) == f

    def test_constant_fold(self):
        f = Polynomial.q_var(0) * Polynomial.q_var(1)
        assert substitute_q(f, [F(1, 3), F(3)]) == Polynomial.constant(1)

    def test_missing_q_entry(self):
        with pytest.raises(IndexError):
            substitute_q(Polynomial.q_var(4), [F(1)])

    def test_agrees_with_eval(self):
        rng = random.Random(29)
        for _ in range(1000):
            f = random_poly(rng)
            p = [F(rng.randint(-4, 4), rng.randint(1, 4)) for _ in range(3)]
            q = [F(rng.randint(-4, 4), rng.randint(1, 4)) for _ in range(2)]
            assert eval_poly(substitute_q(f, q), p) == eval_poly(f, p, q)


class TestInterval:
    def test_simplex_box(self):
        box = [Interval(0.4, 0.6), Interval(0.4, 0.6)]
        enclosure = interval_eval(simplex_poly(), box)
        assert enclosure.lo <= -0.2 and enclosure.hi >= 0.2

    def test_constant(self):
        enclosure = interval_eval(Polynomial.constant(F(3, 4)), [])
        assert enclosure.lo == pytest.approx(0.75, abs=1e-12)
        assert enclosure.hi == pytest.approx(0.75, abs=1e-12)

    def test_square_naive_but_sound(self):
        f = Polynomial.p_var(0) * Polynomial.p_var(0)
        enclosure = interval_eval(f, [Interval(-1.0, 1.0)])
        assert enclosure.lo <= 0.0 and enclosure.hi >= 1.0

    def test_rejects_q_variables(self):
        with pytest.raises(ValueError):
            interval_eval(Polynomial.q_var(0), [Interval(0.0, 1.0)])

    def test_point_conversion_is_outward(self):
        iv = Interval.from_fraction(F(1, 3), F(1, 3))
        assert F(iv.lo) <= F(1, 3) <= F(iv.hi)

    def test_soundness_on_samples(self):
        rng = random.Random(41)
        for _ in range(1000):
            f = substitute_q(random_poly(rng), [F(rng.randint(-3, 3), rng.randint(1, 3)) for _ in range(2)])
            bounds = []
            for _ in range(3):
                a = F(rng.randint(-8, 8), 8)
                w = F(rng.randint(0, 8), 8)
                bounds.append((a, a + w))
            box = [Interval.from_fraction(lo, hi) for lo, hi in bounds]
            enclosure = interval_eval(f, box)
            for _ in range(100):
                point = [
                    lo + (hi - lo) * F(rng.randint(0, 16), 16) for lo, hi in bounds
                ]
                value = float(eval_poly(f, point))
                assert enclosure.lo <= value <= enclosure.hi

    def test_distance_from_zero(self):
        assert Interval(0.5, 2.0).distance_from_zero() == 0.5
        assert Interval(-2.0, -0.25).distance_from_zero() == 0.25
        assert Interval(-1.0, 1.0).distance_from_zero() == 0.0
