"""Sparse multivariate polynomials in p- and q-variables over the rationals.

A polynomial is a canonically sorted tuple of monomials; each monomial has an
exact rational coefficient and sparse exponent maps over the p-variables (the
unknown joint probabilities) and the q-variables (channel kernel entries).
Evaluation is exact; `interval_eval` gives a sound outward-rounded float
enclosure used for feasibility pruning.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from flcap.ratio import format_ratio, parse_ratio

ExponentMap = tuple[tuple[int, int], ...]  # sorted ((var index, exponent >= 1), ...)


def _normalize_exps(exps: Mapping[int, int] | Iterable[tuple[int, int]]) -> ExponentMap:
    items = exps.items() if isinstance(exps, Mapping) else exps
    merged: dict[int, int] = {}
    for idx, e in items:
        if idx < 0:
            raise ValueError(f"negative variable index {idx}")
        if e < 0:
            raise ValueError(f"negative exponent {e} for variable {idx}")
        if e:
            merged[idx] = merged.get(idx, 0) + e
    return tuple(sorted(merged.items()))


@dataclass(frozen=True)
class Monomial:
    coefficient: Fraction
    p_exponents: ExponentMap = ()
    q_exponents: ExponentMap = ()

    @classmethod
    def make(
        cls,
        coefficient: Fraction | int,
        p: Mapping[int, int] | Iterable[tuple[int, int]] = (),
        q: Mapping[int, int] | Iterable[tuple[int, int]] = (),
    ) -> "Monomial":
        return cls(Fraction(coefficient), _normalize_exps(p), _normalize_exps(q))

    @property
    def pattern(self) -> tuple[ExponentMap, ExponentMap]:
        return (self.p_exponents, self.q_exponents)


@dataclass(frozen=True)
class Polynomial:
    """Canonical form: monomials sorted by exponent pattern, no duplicates,
    no zero coefficients.  Equal polynomials compare equal structurally."""

    monomials: tuple[Monomial, ...]

    @classmethod
    def from_monomials(cls, monomials: Iterable[Monomial]) -> "Polynomial":
        acc: dict[tuple[ExponentMap, ExponentMap], Fraction] = {}
        for m in monomials:
            acc[m.pattern] = acc.get(m.pattern, Fraction(0)) + m.coefficient
        canon = tuple(
            Monomial(c, p_exp, q_exp)
            for (p_exp, q_exp), c in sorted(acc.items())
            if c != 0
        )
        return cls(canon)

    @classmethod
    def constant(cls, value: Fraction | int) -> "Polynomial":
        return cls.from_monomials([Monomial.make(value)])

    @classmethod
    def p_var(cls, idx: int) -> "Polynomial":
        return cls.from_monomials([Monomial.make(1, p={idx: 1})])

    @classmethod
    def q_var(cls, idx: int) -> "Polynomial":
        return cls.from_monomials([Monomial.make(1, q={idx: 1})])

    def __add__(self, other: "Polynomial") -> "Polynomial":
        return Polynomial.from_monomials(self.monomials + other.monomials)

    def __neg__(self) -> "Polynomial":
        return Polynomial(tuple(Monomial(-m.coefficient, *m.pattern) for m in self.monomials))

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        return self + (-other)

    def __mul__(self, other: "Polynomial") -> "Polynomial":
        out = []
        for a in self.monomials:
            for b in other.monomials:
                out.append(
                    Monomial(
                        a.coefficient * b.coefficient,
                        _normalize_exps(tuple(a.p_exponents) + tuple(b.p_exponents)),
                        _normalize_exps(tuple(a.q_exponents) + tuple(b.q_exponents)),
                    )
                )
        return Polynomial.from_monomials(out)

    def scale(self, c: Fraction | int) -> "Polynomial":
        c = Fraction(c)
        if c == 0:
            return Polynomial(())
        return Polynomial(tuple(Monomial(m.coefficient * c, *m.pattern) for m in self.monomials))

    def max_p_index(self) -> int:
        """Largest p-variable index used, or -1 for p-free polynomials."""
        return max((i for m in self.monomials for i, _ in m.p_exponents), default=-1)

    def max_q_index(self) -> int:
        return max((i for m in self.monomials for i, _ in m.q_exponents), default=-1)

    def is_p_only(self) -> bool:
        return all(not m.q_exponents for m in self.monomials)


def eval_poly(f: Polynomial, p: Sequence[Fraction], q: Sequence[Fraction] = ()) -> Fraction:
    """Exact value of f at rational points p, q."""
    total = Fraction(0)
    for m in f.monomials:
        term = m.coefficient
        for idx, e in m.p_exponents:
            if idx >= len(p):
                raise IndexError(f"p variable {idx} out of range (vector length {len(p)})")
            term *= p[idx] ** e
        for idx, e in m.q_exponents:
            if idx >= len(q):
                raise IndexError(f"q variable {idx} out of range (vector length {len(q)})")
            term *= q[idx] ** e
        total += term
    return total


def substitute_q(f: Polynomial, q: Sequence[Fraction]) -> Polynomial:
    """Fold the q-variables into the coefficients, leaving a polynomial in p only."""
    out = []
    for m in f.monomials:
        coeff = m.coefficient
        for idx, e in m.q_exponents:
            if idx >= len(q):
                raise IndexError(f"q variable {idx} out of range (vector length {len(q)})")
            coeff *= q[idx] ** e
        out.append(Monomial(coeff, m.p_exponents, ()))
    return Polynomial.from_monomials(out)


# ---------------------------------------------------------------------------
# interval arithmetic (floats, outward-rounded by one ulp per operation)
# ---------------------------------------------------------------------------


def _down(x: float) -> float:
    return math.nextafter(x, -math.inf)


def _up(x: float) -> float:
    return math.nextafter(x, math.inf)


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self) -> None:
        if self.lo > self.hi:
            raise ValueError(f"interval bounds out of order: [{self.lo}, {self.hi}]")

    @classmethod
    def point(cls, value: Fraction | int | float) -> "Interval":
        return cls.from_fraction(Fraction(value), Fraction(value))

    @classmethod
    def from_fraction(cls, lo: Fraction, hi: Fraction) -> "Interval":
        """Smallest float interval with outward-rounded rational endpoints."""
        flo = float(lo)
        if Fraction(flo) > lo:
            flo = _down(flo)
        fhi = float(hi)
        if Fraction(fhi) < hi:
            fhi = _up(fhi)
        return cls(flo, fhi)

    def add(self, other: "Interval") -> "Interval":
        return Interval(_down(self.lo + other.lo), _up(self.hi + other.hi))

    def mul(self, other: "Interval") -> "Interval":
        cands = (
            self.lo * other.lo,
            self.lo * other.hi,
            self.hi * other.lo,
            self.hi * other.hi,
        )
        return Interval(_down(min(cands)), _up(max(cands)))

    def power(self, e: int) -> "Interval":
        if e < 1:
            raise ValueError("exponent must be >= 1")
        acc = self
        for _ in range(e - 1):
            acc = acc.mul(self)
        return acc

    def contains_zero(self) -> bool:
        return self.lo <= 0.0 <= self.hi

    def distance_from_zero(self) -> float:
        """0 if the interval contains zero, else the gap to the nearer endpoint."""
        if self.contains_zero():
            return 0.0
        return self.lo if self.lo > 0.0 else -self.hi


def interval_eval(f: Polynomial, box: Sequence[Interval]) -> Interval:
    """Sound enclosure of {f(p) : p in box} for a p-only polynomial.

    Evaluated monomial by monomial with naive interval products, so the result
    encloses the true range but is not tight (e.g. x^2 on [-1,1] may widen to
    [-1,1]).
    """
    total = Interval(0.0, 0.0)
    for m in f.monomials:
        if m.q_exponents:
            raise ValueError("interval_eval requires a p-only polynomial; substitute q first")
        term = Interval.point(m.coefficient)
        for idx, e in m.p_exponents:
            if idx >= len(box):
                raise IndexError(f"p variable {idx} out of range (box length {len(box)})")
            term = term.mul(box[idx].power(e))
        total = total.add(term)
    return total


# ---------------------------------------------------------------------------
# JSON form (used inside the FLC file format)
# ---------------------------------------------------------------------------


def monomial_to_json(m: Monomial) -> dict:
    return {
        "c": format_ratio(m.coefficient),
        "p": {str(i): e for i, e in m.p_exponents},
        "q": {str(i): e for i, e in m.q_exponents},
    }


def monomial_from_json(doc: dict) -> Monomial:
    return Monomial.make(
        parse_ratio(doc["c"]),
        {int(i): int(e) for i, e in doc.get("p", {}).items()},
        {int(i): int(e) for i, e in doc.get("q", {}).items()},
    )


def polynomial_to_json(f: Polynomial) -> list[dict]:
    return [monomial_to_json(m) for m in f.monomials]


def polynomial_from_json(doc: list) -> Polynomial:
    return Polynomial.from_monomials(monomial_from_json(m) for m in doc)
