"""Entropy, conditional mutual information, and L1-continuity bounds.

Units are nats throughout (natural log); conversion to bits happens only at
the CLI display layer.  Inputs are exact-rational distributions; each marginal
entry is converted to a double exactly once before the log is taken, so the
only numeric error is float rounding of the final sums.
"""

from __future__ import annotations

import math
from typing import Iterable, NamedTuple

from flcap.prob_core import Distribution, IndexSet, marginalize

#: MI values in (-MI_CLAMP_TOL, 0) are treated as rounded zeros.
MI_CLAMP_TOL = 1e-12


def entropy(d: Distribution) -> float:
    """-sum p ln p in nats, with 0 ln 0 = 0."""
    h = 0.0
    for p in d.probs:
        if p:
            x = float(p)
            h -= x * math.log(x)
    return max(h, 0.0)


def cond_mutual_info(
    d: Distribution,
    u: IndexSet | Iterable[int],
    y: IndexSet | Iterable[int],
    z: IndexSet | Iterable[int] = (),
) -> float:
    """I(U;Y|Z) in nats via H(U,Z) + H(Y,Z) - H(Z) - H(U,Y,Z).

    The three coordinate sets must be pairwise disjoint; `z` may be empty,
    which gives plain mutual information.  Float results within the clamp
    tolerance of zero snap to exactly 0 (the identity's cancellation noise is
    two-sided, and independent variables must report 0).
    """
    u = IndexSet.coerce(u)
    y = IndexSet.coerce(y)
    z = IndexSet.coerce(z)
    if u.overlaps(y) or u.overlaps(z) or y.overlaps(z):
        raise ValueError(f"index sets must be pairwise disjoint: U={u.indices} Y={y.indices} Z={z.indices}")
    value = (
        entropy(marginalize(d, u.union(z)))
        + entropy(marginalize(d, y.union(z)))
        - entropy(marginalize(d, z))
        - entropy(marginalize(d, u.union(y).union(z)))
    )
    if -MI_CLAMP_TOL < value < MI_CLAMP_TOL:
        return 0.0
    return value


def entropy_continuity_bound(l1: float, alphabet_size: int) -> float:
    """Bound on |H(p1) - H(p2)| for ||p1 - p2||_1 = l1 on an alphabet of the
    given size: l1 * ln(size / l1), valid for 0 < l1 <= 1/2."""
    if not (0.0 < l1 <= 0.5):
        raise ValueError(f"l1 must lie in (0, 1/2], got {l1}")
    if alphabet_size < 2:
        raise ValueError(f"alphabet size must be >= 2, got {alphabet_size}")
    return l1 * math.log(alphabet_size / l1)


class MITermShape(NamedTuple):
    """Product-alphabet sizes of the four marginals entering one MI term."""

    uz_size: int
    yz_size: int
    z_size: int
    uyz_size: int


def mi_term_shape(
    alphabet_sizes: Iterable[int],
    u: IndexSet | Iterable[int],
    y: IndexSet | Iterable[int],
    z: IndexSet | Iterable[int] = (),
) -> MITermShape:
    sizes = tuple(alphabet_sizes)
    u = IndexSet.coerce(u)
    y = IndexSet.coerce(y)
    z = IndexSet.coerce(z)

    def prod(ix: IndexSet) -> int:
        n = 1
        for i in ix:
            n *= sizes[i]
        return n

    return MITermShape(prod(u.union(z)), prod(y.union(z)), prod(z), prod(u.union(y).union(z)))


def _entropy_term_bound(l1: float, size: int) -> float:
    # size-1 marginals (e.g. empty Z) have constant entropy 0
    if size < 2:
        return 0.0
    return entropy_continuity_bound(l1, size)


def mi_term_error_budget(l1: float, shape: MITermShape) -> float:
    """Worst-case drift of one conditional-MI term when the joint moves by at
    most `l1` in L1.

    Marginalization is L1-contractive, so each of the four marginal pairs is
    within `l1` too; the budget is the sum of the four entropy bounds.
    """
    if not (0.0 < l1 <= 0.5):
        raise ValueError(f"l1 must lie in (0, 1/2], got {l1}")
    return (
        _entropy_term_bound(l1, shape.uz_size)
        + _entropy_term_bound(l1, shape.yz_size)
        + _entropy_term_bound(l1, shape.z_size)
        + _entropy_term_bound(l1, shape.uyz_size)
    )


def mi_term_error_budget_capped(l1: float, shape: MITermShape) -> float:
    """`mi_term_error_budget` extended to arbitrary l1 > 0.

    Beyond l1 = 1/2 each entropy difference is bounded by ln(size) instead;
    used by the engine when reporting budgets for coarse grids.
    """
    if l1 <= 0.0:
        return 0.0

    def term(size: int) -> float:
        if size < 2:
            return 0.0
        if l1 <= 0.5:
            return entropy_continuity_bound(l1, size)
        return math.log(size)

    return term(shape.uz_size) + term(shape.yz_size) + term(shape.z_size) + term(shape.uyz_size)
