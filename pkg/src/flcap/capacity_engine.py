"""Max-min rate evaluation over feasible grids and everything built on it:
capacity estimates with explicit error budgets, threshold gap decisions, and
2-user rate-region extraction.

Point-to-point evaluation: every inequality carrying the (single) rate symbol
is normalized to an upper bound R <= sum(alpha' I) and the engine returns

    gamma = max over feasible grid members of min over bounds of sum(alpha' I)

Inequalities with no rate term act as membership filters instead.  Strict and
non-strict relations are evaluated identically (the engine approximates the
closure of the feasible region, where the distinction vanishes).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Iterable, Iterator, NamedTuple, Sequence

from flcap.prob_core import ChannelSpec, Distribution, product_size
from flcap.info_measures import (
    MITermShape,
    cond_mutual_info,
    mi_term_error_budget_capped,
    mi_term_shape,
)
from flcap.flc_model import FLCSpec, Inequality, MITerm, validate_against_channel
from flcap.feasibility_grid import (
    DEFAULT_GRID_CAP,
    DEFAULT_MAX_DEPTH,
    FeasibleSet,
    GridCapError,
    build_delta_net,
    build_feasible_set,
    count_structured_candidates,
    free_block_conditional_shapes,
    iter_structured_joints,
    lattice_net,
)

FILTER_TOL = 1e-9


class PointToPointError(ValueError):
    """The representation does not reduce to upper bounds on a single rate."""


class RateCountError(ValueError):
    """The representation does not carry exactly two rate symbols."""


@dataclass(frozen=True)
class RateBound:
    """R <= sum over terms of alpha' * I(U;Y|Z)."""

    coefficients: tuple[Fraction, ...]
    terms: tuple[MITerm, ...]


@dataclass(frozen=True)
class MembershipFilter:
    """A rate-free inequality: sum(alpha I) <relation> 0 must hold at a member."""

    terms: tuple[MITerm, ...]
    relation: str


def normalize_point_to_point(flc: FLCSpec) -> tuple[list[RateBound], list[MembershipFilter]]:
    pairs = flc.rate_pairs()
    if len(pairs) > 1:
        raise PointToPointError(f"expected a single rate symbol, found {pairs}")
    bounds: list[RateBound] = []
    filters: list[MembershipFilter] = []
    for r, ineq in enumerate(flc.representation):
        beta = sum((t.beta for t in ineq.rate_terms), Fraction(0))
        if beta == 0:
            if any(t.beta != 0 for t in ineq.rate_terms):
                raise PointToPointError(f"representation[{r}]: rate terms cancel to zero")
            filters.append(MembershipFilter(ineq.mi_terms, ineq.relation))
            continue
        upper = (beta > 0 and ineq.relation in ("<=", "<", "=")) or (
            beta < 0 and ineq.relation in (">=", ">")
        )
        if not upper:
            raise PointToPointError(
                f"representation[{r}]: inequality lower-bounds the rate; "
                "only upper bounds reduce to a max-min evaluation"
            )
        coeffs = tuple(-t.alpha / beta for t in ineq.mi_terms)
        bounds.append(RateBound(coeffs, ineq.mi_terms))
    if not bounds:
        raise PointToPointError("representation has no rate-bounding inequality")
    return bounds, filters


def _mi(joint: Distribution, term: MITerm) -> float:
    return cond_mutual_info(joint, term.u, term.y, term.z)


def _passes_filter(joint: Distribution, flt: MembershipFilter, tol: float = FILTER_TOL) -> bool:
    value = sum(float(t.alpha) * _mi(joint, t) for t in flt.terms)
    if flt.relation in ("<=", "<"):
        return value <= tol
    if flt.relation in (">=", ">"):
        return value >= -tol
    return abs(value) <= tol


def _bound_value(joint: Distribution, bound: RateBound) -> float:
    return sum(float(c) * _mi(joint, t) for c, t in zip(bound.coefficients, bound.terms))


@dataclass(frozen=True)
class GammaResult:
    """Max-min value over the feasible set, with the witnessing member."""

    gamma: float
    argmax_index: int | None
    argmax_values: tuple[float, ...]
    unknown_fraction: float
    n_members: int
    empty: bool


def _gamma_stream(
    bounds: Sequence[RateBound],
    filters: Sequence[MembershipFilter],
    joints: Iterable[tuple[int, Distribution]],
    unknown: frozenset[int] = frozenset(),
    strict_unknowns: bool = False,
) -> GammaResult:
    best = -math.inf
    best_index: int | None = None
    best_values: tuple[float, ...] = ()
    n_members = 0
    n_unknown = 0
    for index, joint in joints:
        if index in unknown:
            n_unknown += 1
            if strict_unknowns:
                continue
        n_members += 1
        if filters and not all(_passes_filter(joint, f) for f in filters):
            continue
        values = tuple(_bound_value(joint, b) for b in bounds)
        v = min(values)
        if v > best:
            best = v
            best_index = index
            best_values = values
    if best_index is None:
        return GammaResult(0.0, None, (), 0.0, 0, True)
    denom = n_members + (n_unknown if strict_unknowns else 0)
    frac = (n_unknown / denom) if denom else 0.0
    return GammaResult(best, best_index, best_values, frac, n_members, False)


def gamma(
    flc: FLCSpec,
    channel: ChannelSpec,
    feasible: FeasibleSet,
    strict_unknowns: bool = False,
) -> GammaResult:
    """Exact max-min over a materialized feasible set.  MI terms are evaluated
    at each member's stored joint (the grid point itself in generic mode)."""
    mismatch = validate_against_channel(flc, channel)
    if mismatch:
        raise ValueError(mismatch)
    bounds, filters = normalize_point_to_point(flc)
    return _gamma_stream(
        bounds,
        filters,
        zip(feasible.members, feasible.joints),
        unknown=feasible.unknown,
        strict_unknowns=strict_unknowns,
    )


# ---------------------------------------------------------------------------
# error budgets
# ---------------------------------------------------------------------------


def _bound_shapes(flc: FLCSpec, bound: RateBound) -> list[tuple[Fraction, MITermShape]]:
    return [
        (abs(c), mi_term_shape(flc.sizes, t.u, t.y, t.z))
        for c, t in zip(bound.coefficients, bound.terms)
    ]


def grid_budget(flc: FLCSpec, bounds: Sequence[RateBound], l1: float) -> float:
    """Worst-case drift of any bound value when the joint moves by <= l1 in L1
    (the max over inequalities of the per-term budget sums)."""
    if l1 <= 0:
        return 0.0
    worst = 0.0
    for bound in bounds:
        total = sum(
            float(c) * mi_term_error_budget_capped(l1, shape)
            for c, shape in _bound_shapes(flc, bound)
        )
        worst = max(worst, total)
    return worst


def _solve_delta(flc: FLCSpec, bounds: Sequence[RateBound], target: float) -> Fraction:
    """Largest delta (up to bisection resolution) with grid_budget <= target."""
    if grid_budget(flc, bounds, 0.5) <= target:
        return Fraction(1, 2)
    lo, hi = 0.0, 0.5  # budget(lo) = 0 <= target < budget(hi)
    for _ in range(80):
        mid = (lo + hi) / 2
        if mid <= 0.0 or mid == lo or mid == hi:
            break
        if grid_budget(flc, bounds, mid) <= target:
            lo = mid
        else:
            hi = mid
    if lo <= 0.0:
        raise ValueError(f"no usable grid resolution for error target {target}")
    delta = Fraction(lo).limit_denominator(10**12)
    while delta > 0 and grid_budget(flc, bounds, float(delta)) > target:
        delta = delta * Fraction(999, 1000)
    if delta <= 0:
        raise ValueError(f"no usable grid resolution for error target {target}")
    return delta


@dataclass(frozen=True)
class ErrorBreakdown:
    """Accounting of |reported - ideal| contributions, all in nats.

    grid      -- MI drift budget for the lattice covering radius
    numeric   -- allowance for float rounding in entropy sums
    eta_slack -- generic mode only: two-sided drift bound between eta-relaxed
                 grid feasibility and exact-constraint evaluation at the same
                 lattice (0 in structured mode, where residuals are exactly 0)
    """

    grid: float
    numeric: float
    eta_slack: float


@dataclass(frozen=True)
class CapacityEstimate:
    beta: float
    epsilon: float
    delta_used: Fraction
    grid_size: int
    error_breakdown: ErrorBreakdown
    unknown_fraction: float
    mode: str
    gamma_result: GammaResult
    empty_feasible_set: bool

    @property
    def interval(self) -> tuple[float, float]:
        return (self.beta - self.epsilon, self.beta + self.epsilon)


NUMERIC_ALLOWANCE = 1e-9


def _structured_m_for_delta(flc: FLCSpec, delta: Fraction) -> int:
    """Single lattice denominator fine enough that the constructed joints
    cover every feasible joint within L1 delta (free-block errors add up)."""
    shapes = free_block_conditional_shapes(flc)
    n_free = len(shapes)
    if n_free == 0:
        return 1
    per_block = delta / n_free
    return max(math.ceil(Fraction(2 * cells) / per_block) for _, _, cells in shapes)


def _structured_delta_used(flc: FLCSpec, m: int) -> Fraction:
    shapes = free_block_conditional_shapes(flc)
    return sum((Fraction(2 * cells, m) for _, _, cells in shapes), Fraction(0))


def _eta_slack(
    flc: FLCSpec,
    bounds: Sequence[RateBound],
    delta: Fraction,
    eta: Fraction,
) -> float:
    reach = product_size(flc.sizes) * (float(delta) + float(eta))
    return 2.0 * grid_budget(flc, bounds, reach)


def approximate_capacity(
    flc: FLCSpec,
    channel: ChannelSpec,
    epsilon: float,
    mode: str = "auto",
    cap: int = DEFAULT_GRID_CAP,
    strict_unknowns: bool = False,
) -> CapacityEstimate:
    """Capacity estimate beta with |C - beta| <= epsilon, conditional on the
    inequality system exactly characterizing the channel's capacity.

    The budget is split epsilon/2 for the grid (via the per-term MI continuity
    bounds), epsilon/4 for numerics, epsilon/4 for feasibility slack; the grid
    resolution is the largest delta whose budget fits.
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    mismatch = validate_against_channel(flc, channel)
    if mismatch:
        raise ValueError(mismatch)
    bounds, filters = normalize_point_to_point(flc)
    delta = _solve_delta(flc, bounds, epsilon / 2)

    if mode == "auto":
        mode = "structured" if flc.structured is not None else "generic"
    if mode == "structured" and flc.structured is None:
        raise ValueError("structured mode requested but the FLC has no factorization plan")

    if mode == "structured":
        m = _structured_m_for_delta(flc, delta)
        n_candidates = count_structured_candidates(flc, m)
        if n_candidates > cap:
            raise GridCapError(
                f"structured grid at m={m} needs {n_candidates} candidates (cap {cap}); "
                "use a larger epsilon"
            )
        result = _gamma_stream(bounds, filters, iter_structured_joints(flc, channel, m, cap=cap))
        delta_used = _structured_delta_used(flc, m)
        breakdown = ErrorBreakdown(
            grid=grid_budget(flc, bounds, float(delta_used)),
            numeric=min(NUMERIC_ALLOWANCE, epsilon / 4),
            eta_slack=0.0,
        )
        grid_size = n_candidates
    else:
        try:
            net = build_delta_net(flc.alphabets, delta, cap=cap)
        except GridCapError as exc:
            raise GridCapError(f"{exc}; use a larger epsilon") from None
        feasible = build_feasible_set(flc, channel, net, cap=cap)
        result = _gamma_stream(
            bounds,
            filters,
            zip(feasible.members, feasible.joints),
            unknown=feasible.unknown,
            strict_unknowns=strict_unknowns,
        )
        eta = net.delta * net.delta
        breakdown = ErrorBreakdown(
            grid=grid_budget(flc, bounds, float(net.delta)),
            numeric=min(NUMERIC_ALLOWANCE, epsilon / 4),
            eta_slack=_eta_slack(flc, bounds, net.delta, eta),
        )
        delta_used = net.delta
        grid_size = net.size

    return CapacityEstimate(
        beta=result.gamma,
        epsilon=epsilon,
        delta_used=delta_used,
        grid_size=grid_size,
        error_breakdown=breakdown,
        unknown_fraction=result.unknown_fraction,
        mode=mode,
        gamma_result=result,
        empty_feasible_set=result.empty,
    )


def capacity_at_grid(
    flc: FLCSpec,
    channel: ChannelSpec,
    m: int,
    mode: str = "auto",
    eta: Fraction | None = None,
    max_depth: int = DEFAULT_MAX_DEPTH,
    cap: int = DEFAULT_GRID_CAP,
    strict_unknowns: bool = False,
) -> CapacityEstimate:
    """Gamma at an explicit lattice denominator, with the error terms reported
    from the actual grid rather than solved from a target epsilon."""
    mismatch = validate_against_channel(flc, channel)
    if mismatch:
        raise ValueError(mismatch)
    bounds, filters = normalize_point_to_point(flc)
    if mode == "auto":
        mode = "structured" if flc.structured is not None else "generic"

    if mode == "structured":
        if flc.structured is None:
            raise ValueError("structured mode requested but the FLC has no factorization plan")
        n_candidates = count_structured_candidates(flc, m)
        if n_candidates > cap:
            raise GridCapError(
                f"structured grid at m={m} needs {n_candidates} candidates (cap {cap})"
            )
        result = _gamma_stream(bounds, filters, iter_structured_joints(flc, channel, m, cap=cap))
        delta_used = _structured_delta_used(flc, m)
        breakdown = ErrorBreakdown(
            grid=grid_budget(flc, bounds, float(delta_used)),
            numeric=NUMERIC_ALLOWANCE,
            eta_slack=0.0,
        )
        grid_size = n_candidates
    else:
        net = lattice_net(flc.alphabets, m, cap=cap)
        if eta is None:
            eta = net.delta * net.delta
        feasible = build_feasible_set(flc, channel, net, eta=eta, max_depth=max_depth, cap=cap)
        result = _gamma_stream(
            bounds,
            filters,
            zip(feasible.members, feasible.joints),
            unknown=feasible.unknown,
            strict_unknowns=strict_unknowns,
        )
        breakdown = ErrorBreakdown(
            grid=grid_budget(flc, bounds, float(net.delta)),
            numeric=NUMERIC_ALLOWANCE,
            eta_slack=_eta_slack(flc, bounds, net.delta, eta),
        )
        delta_used = net.delta
        grid_size = net.size

    epsilon = breakdown.grid + breakdown.numeric + breakdown.eta_slack
    return CapacityEstimate(
        beta=result.gamma,
        epsilon=epsilon,
        delta_used=delta_used,
        grid_size=grid_size,
        error_breakdown=breakdown,
        unknown_fraction=result.unknown_fraction,
        mode=mode,
        gamma_result=result,
        empty_feasible_set=result.empty,
    )


# ---------------------------------------------------------------------------
# gap decision
# ---------------------------------------------------------------------------


class GapVerdict(Enum):
    AT_MOST_HALF = "capacity <= lambda/2"
    AT_LEAST_LAMBDA = "capacity >= lambda"


@dataclass(frozen=True)
class GapDecision:
    verdict: GapVerdict
    lam: float
    threshold: float
    estimate: CapacityEstimate


def gap_decide(
    flc: FLCSpec,
    channel: ChannelSpec,
    lam: float,
    mode: str = "auto",
    cap: int = DEFAULT_GRID_CAP,
) -> GapDecision:
    """Decide between "capacity <= lam/2" and "capacity >= lam" for a channel
    promised to satisfy one of the two.  Runs the capacity estimate at
    epsilon = lam/20 and thresholds at lam/2 + lam/20.

    If the caller's promise is broken a verdict is still returned, but it
    carries no guarantee.
    """
    if lam <= 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    estimate = approximate_capacity(flc, channel, lam / 20, mode=mode, cap=cap)
    threshold = lam / 2 + lam / 20
    verdict = GapVerdict.AT_MOST_HALF if estimate.beta <= threshold else GapVerdict.AT_LEAST_LAMBDA
    return GapDecision(verdict, lam, threshold, estimate)


# ---------------------------------------------------------------------------
# 2-user rate regions
# ---------------------------------------------------------------------------


class RatePoint(NamedTuple):
    r1: float
    r2: float


@dataclass(frozen=True)
class HalfPlane:
    """a*R1 + b*R2 <= sum(coef * I(term)) evaluated per member."""

    a: float
    b: float
    coefficients: tuple[Fraction, ...]
    terms: tuple[MITerm, ...]


@dataclass(frozen=True)
class RegionMember:
    index: int
    vertices: tuple[RatePoint, ...]
    unbounded: bool


@dataclass(frozen=True)
class RegionResult:
    rate_pairs: tuple[tuple[int, int], tuple[int, int]]
    members: tuple[RegionMember, ...]
    #: 64-direction support fan over the union of member polygons
    support: tuple[tuple[float, float, float], ...]
    mode: str
    m: int

    def max_sum_rate(self) -> float:
        best = 0.0
        for member in self.members:
            for v in member.vertices:
                best = max(best, v.r1 + v.r2)
        return best


def _halfplanes_2user(flc: FLCSpec) -> tuple[list[HalfPlane], list[MembershipFilter]]:
    pairs = flc.rate_pairs()
    if len(pairs) != 2:
        raise RateCountError(f"expected exactly 2 rate symbols, found {len(pairs)}: {pairs}")
    planes: list[HalfPlane] = []
    filters: list[MembershipFilter] = []
    for ineq in flc.representation:
        a = sum((t.beta for t in ineq.rate_terms if t.pair == pairs[0]), Fraction(0))
        b = sum((t.beta for t in ineq.rate_terms if t.pair == pairs[1]), Fraction(0))
        if a == 0 and b == 0:
            filters.append(MembershipFilter(ineq.mi_terms, ineq.relation))
            continue
        coeffs = tuple(-t.alpha for t in ineq.mi_terms)
        sides = []
        if ineq.relation in ("<=", "<", "="):
            sides.append((a, b, coeffs))
        if ineq.relation in (">=", ">", "="):
            sides.append((-a, -b, tuple(-c for c in coeffs)))
        for sa, sb, sc in sides:
            planes.append(HalfPlane(float(sa), float(sb), sc, ineq.mi_terms))
    return planes, filters


def clip_halfplane(
    poly: Sequence[tuple[float, float]], a: float, b: float, c: float, tol: float = 1e-12
) -> list[tuple[float, float]]:
    """Sutherland-Hodgman clip of a convex CCW polygon to a*x + b*y <= c."""
    out: list[tuple[float, float]] = []
    n = len(poly)
    for k in range(n):
        cur = poly[k]
        nxt = poly[(k + 1) % n]
        cur_in = a * cur[0] + b * cur[1] <= c + tol
        nxt_in = a * nxt[0] + b * nxt[1] <= c + tol
        if cur_in:
            out.append(cur)
        if cur_in != nxt_in:
            denom = a * (nxt[0] - cur[0]) + b * (nxt[1] - cur[1])
            if denom != 0.0:
                t = (c - a * cur[0] - b * cur[1]) / denom
                t = min(1.0, max(0.0, t))
                out.append((cur[0] + t * (nxt[0] - cur[0]), cur[1] + t * (nxt[1] - cur[1])))
    deduped: list[tuple[float, float]] = []
    for p in out:
        if not deduped or (abs(p[0] - deduped[-1][0]) > tol or abs(p[1] - deduped[-1][1]) > tol):
            deduped.append(p)
    if len(deduped) > 1 and abs(deduped[0][0] - deduped[-1][0]) <= tol and abs(deduped[0][1] - deduped[-1][1]) <= tol:
        deduped.pop()
    return deduped


def intersect_halfplanes(
    rhs: Sequence[float], planes: Sequence[HalfPlane], bound: float
) -> tuple[list[tuple[float, float]], bool]:
    """Intersect {a R1 + b R2 <= rhs} with the nonnegative quadrant, clipped to
    [0, bound]^2.  Returns (CCW vertices, touched-artificial-boundary)."""
    poly: list[tuple[float, float]] = [(0.0, 0.0), (bound, 0.0), (bound, bound), (0.0, bound)]
    for plane, c in zip(planes, rhs):
        poly = clip_halfplane(poly, plane.a, plane.b, c)
        if not poly:
            return [], False
    tol = 1e-9 * max(1.0, bound)
    unbounded = any(x >= bound - tol or y >= bound - tol for x, y in poly)
    return poly, unbounded


def region_2user(
    flc: FLCSpec,
    channel: ChannelSpec,
    m: int,
    mode: str = "auto",
    n_directions: int = 64,
    eta: Fraction | None = None,
    max_depth: int = DEFAULT_MAX_DEPTH,
    cap: int = DEFAULT_GRID_CAP,
) -> RegionResult:
    """Per feasible grid member, the polygon of rate pairs allowed by the
    inequalities at that member; the region is the union, reported as the
    polygon list plus a direction-fan of support values."""
    mismatch = validate_against_channel(flc, channel)
    if mismatch:
        raise ValueError(mismatch)
    planes, filters = _halfplanes_2user(flc)
    pairs = flc.rate_pairs()
    if mode == "auto":
        mode = "structured" if flc.structured is not None else "generic"

    if mode == "structured":
        if flc.structured is None:
            raise ValueError("structured mode requested but the FLC has no factorization plan")
        joints: Iterator[tuple[int, Distribution]] = iter_structured_joints(flc, channel, m, cap=cap)
    else:
        net = lattice_net(flc.alphabets, m, cap=cap)
        feasible = build_feasible_set(flc, channel, net, eta=eta, max_depth=max_depth, cap=cap)
        joints = iter(zip(feasible.members, feasible.joints))

    members: list[RegionMember] = []
    directions = [
        (math.cos(2 * math.pi * k / n_directions), math.sin(2 * math.pi * k / n_directions))
        for k in range(n_directions)
    ]
    support = [-math.inf] * n_directions

    for index, joint in joints:
        if filters and not all(_passes_filter(joint, f) for f in filters):
            continue
        rhs = [
            sum(float(c) * _mi(joint, t) for c, t in zip(plane.coefficients, plane.terms))
            for plane in planes
        ]
        bound = 2.0 * (1.0 + max((abs(v) for v in rhs), default=1.0))
        vertices, unbounded = intersect_halfplanes(rhs, planes, bound)
        members.append(
            RegionMember(index, tuple(RatePoint(x, y) for x, y in vertices), unbounded)
        )
        for k, (dx, dy) in enumerate(directions):
            for x, y in vertices:
                s = dx * x + dy * y
                if s > support[k]:
                    support[k] = s

    fan = tuple(
        (dx, dy, (s if s != -math.inf else 0.0))
        for (dx, dy), s in zip(directions, support)
    )
    return RegionResult(
        rate_pairs=(pairs[0], pairs[1]),
        members=tuple(members),
        support=fan,
        mode=mode,
        m=m,
    )
