"""Simplex lattices and box-constrained polynomial feasibility.

The lattice with denominator m (all probability vectors whose entries are
multiples of 1/m) is an L1 delta-net of the simplex once m >= 2G/delta, G the
number of cells: nearest-type rounding moves a distribution by less than
delta/2.  Feasibility of the polynomial constraints over the L1 box around a
lattice point is semi-decided by interval branch-and-prune:

* Feasible   -- an exact rational point in box /\ simplex has every
                |constraint| <= eta (checked in exact arithmetic);
* Infeasible -- outward-rounded interval evaluation excludes a simultaneous
                zero over the whole box (sound);
* Unknown    -- bisection depth exhausted; callers treat Unknown as feasible
                so the feasible set over-approximates.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Iterator, Sequence

from flcap.prob_core import (
    Alphabet,
    ChannelSpec,
    Distribution,
    enumerate_assignments,
    flatten_channel,
    product_size,
)
from flcap.polynomial import Interval, Monomial, Polynomial, eval_poly, interval_eval, substitute_q
from flcap.flc_model import (
    FLCSpec,
    FreeBlock,
    block_target_sizes,
    joint_from_plan,
    validate_against_channel,
)

DEFAULT_GRID_CAP = 10**7
DEFAULT_MAX_DEPTH = 12


class GridCapError(Exception):
    """Requested grid or candidate enumeration exceeds the configured cap."""


def lattice_size(m: int, cells: int) -> int:
    return math.comb(m + cells - 1, cells - 1)


def enumerate_lattice(m: int, cells: int) -> Iterator[tuple[Fraction, ...]]:
    """All probability vectors with denominator m over `cells` cells, in a
    fixed (combinatorial) order."""
    for bars in itertools.combinations(range(m + cells - 1), cells - 1):
        counts = []
        prev = -1
        for b in bars:
            counts.append(b - prev - 1)
            prev = b
        counts.append(m + cells - 2 - prev)
        yield tuple(Fraction(k, m) for k in counts)


def round_to_lattice(probs: Sequence[Fraction], m: int) -> tuple[Fraction, ...]:
    """Nearest-type rounding: floor every entry to the 1/m lattice, then give
    the leftover mass to the cells with the largest fractional parts."""
    scaled = [Fraction(p) * m for p in probs]
    floors = [int(s) for s in scaled]
    fracs = [s - f for s, f in zip(scaled, floors)]
    leftover = m - sum(floors)
    order = sorted(range(len(probs)), key=lambda i: fracs[i], reverse=True)
    for i in order[:leftover]:
        floors[i] += 1
    return tuple(Fraction(k, m) for k in floors)


@dataclass(frozen=True)
class GridNet:
    """A delta-net of rational distributions on a product simplex.

    `points` enumerates lazily (and caches): consumers that only need the
    lattice denominator, e.g. the structured feasibility path, never pay for
    the joint enumeration.  The size cap is enforced at construction from the
    count formula.
    """

    alphabets: tuple[Alphabet, ...]
    delta: Fraction
    m: int

    @property
    def cells(self) -> int:
        return product_size(a.size for a in self.alphabets)

    @property
    def size(self) -> int:
        return lattice_size(self.m, self.cells)

    @property
    def points(self) -> tuple[Distribution, ...]:
        cached = getattr(self, "_cached_points", None)
        if cached is None:
            cached = tuple(
                Distribution(self.alphabets, vec)
                for vec in enumerate_lattice(self.m, self.cells)
            )
            object.__setattr__(self, "_cached_points", cached)
        return cached

    def point_index(self, probs: Sequence[Fraction]) -> int:
        """Index of an exact lattice member (all entries multiples of 1/m)."""
        counts = [Fraction(p) * self.m for p in probs]
        key = tuple(int(c) for c in counts)
        return self._index_map()[key]

    def _index_map(self) -> dict[tuple[int, ...], int]:
        cached = getattr(self, "_cached_index_map", None)
        if cached is None:
            cached = {
                tuple(int(p * self.m) for p in pt.probs): i for i, pt in enumerate(self.points)
            }
            object.__setattr__(self, "_cached_index_map", cached)
        return cached


def _net_for_m(alphabets: tuple[Alphabet, ...], m: int, delta: Fraction, cap: int) -> GridNet:
    cells = product_size(a.size for a in alphabets)
    count = lattice_size(m, cells)
    if count > cap:
        raise GridCapError(
            f"lattice with denominator {m} over {cells} cells has {count} points "
            f"(cap {cap}); use a coarser delta"
        )
    return GridNet(alphabets, delta, m)


def build_delta_net(
    alphabets: Sequence[Alphabet],
    delta: Fraction,
    cap: int = DEFAULT_GRID_CAP,
) -> GridNet:
    """Lattice net with denominator m = ceil(2G/delta) over the product
    simplex of `alphabets` (G = product alphabet size)."""
    delta = Fraction(delta)
    if not (0 < delta <= 1):
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    alphabets = tuple(alphabets)
    cells = product_size(a.size for a in alphabets)
    if cells < 2:
        raise ValueError("product alphabet must have at least 2 cells")
    m = math.ceil(Fraction(2 * cells) / delta)
    return _net_for_m(alphabets, m, delta, cap)


def lattice_net(
    alphabets: Sequence[Alphabet],
    m: int,
    cap: int = DEFAULT_GRID_CAP,
) -> GridNet:
    """Lattice net with an explicit denominator m; the implied covering
    guarantee is delta = 2G/m."""
    if m < 1:
        raise ValueError(f"lattice denominator must be >= 1, got {m}")
    alphabets = tuple(alphabets)
    cells = product_size(a.size for a in alphabets)
    return _net_for_m(alphabets, m, Fraction(2 * cells, m), cap)


# ---------------------------------------------------------------------------
# box feasibility
# ---------------------------------------------------------------------------


class Status(Enum):
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class Verdict:
    status: Status
    #: exact rational point with all |constraint| <= eta (Feasible only)
    witness: tuple[Fraction, ...] | None = None
    #: max exact |constraint| at the witness
    residual: Fraction | None = None
    #: Infeasible only: lower bound on the excluded constraint's magnitude,
    #: minimized over the pruned leaves of the search tree
    certificate: float = 0.0


def _simplex_fill(
    lo: Sequence[Fraction], hi: Sequence[Fraction], reverse: bool = False
) -> tuple[Fraction, ...] | None:
    """A rational point in the box with coordinates summing to exactly 1, or
    None if the box misses the simplex slice.  The leftover mass is piled onto
    the first coordinates (or the last, with `reverse`), so the two variants
    reach opposite corners of the slice."""
    total_lo = sum(lo, Fraction(0))
    total_hi = sum(hi, Fraction(0))
    if total_lo > 1 or total_hi < 1:
        return None
    point = list(lo)
    remaining = 1 - total_lo
    order = range(len(point) - 1, -1, -1) if reverse else range(len(point))
    for i in order:
        if remaining == 0:
            break
        room = hi[i] - lo[i]
        step = room if room < remaining else remaining
        point[i] += step
        remaining -= step
    if remaining != 0:
        return None
    return tuple(point)


def _repair_candidate(
    anchor: Sequence[Fraction], lo: Sequence[Fraction], hi: Sequence[Fraction]
) -> tuple[Fraction, ...] | None:
    """Clip `anchor` into the box, then shift mass greedily until the sum is
    exactly 1 (or report the slice empty)."""
    point = [min(max(a, l), h) for a, l, h in zip(anchor, lo, hi)]
    total = sum(point, Fraction(0))
    if total < 1:
        need = 1 - total
        for i in range(len(point)):
            room = hi[i] - point[i]
            step = room if room < need else need
            point[i] += step
            need -= step
            if need == 0:
                return tuple(point)
        return None
    if total > 1:
        excess = total - 1
        for i in range(len(point)):
            room = point[i] - lo[i]
            step = room if room < excess else excess
            point[i] -= step
            excess -= step
            if excess == 0:
                return tuple(point)
        return None
    return tuple(point)


def _max_residual(constraints: Sequence[Polynomial], point: Sequence[Fraction]) -> Fraction:
    worst = Fraction(0)
    for f in constraints:
        r = abs(eval_poly(f, point))
        if r > worst:
            worst = r
    return worst


def _simplex_sum_poly(n: int) -> Polynomial:
    return Polynomial.from_monomials(
        [Monomial.make(1, p={i: 1}) for i in range(n)] + [Monomial.make(-1)]
    )


def check_box(
    constraints: Sequence[Polynomial],
    u: Distribution,
    delta: Fraction,
    eta: Fraction,
    max_depth: int = DEFAULT_MAX_DEPTH,
) -> Verdict:
    """Semi-decide whether some point of the L1 box around `u` (intersected
    with the simplex) satisfies every constraint within eta.

    `constraints` must already be q-substituted (p-only polynomials).
    """
    delta = Fraction(delta)
    eta = Fraction(eta)
    if eta <= 0:
        raise ValueError(f"eta must be positive, got {eta}")
    n = len(u.probs)
    root_lo = tuple(max(Fraction(0), p - delta) for p in u.probs)
    root_hi = tuple(min(Fraction(1), p + delta) for p in u.probs)
    prune_polys = tuple(constraints) + (_simplex_sum_poly(n),)

    best_certificate = math.inf
    any_unknown = False
    stack: list[tuple[tuple[Fraction, ...], tuple[Fraction, ...], int]] = [(root_lo, root_hi, 0)]

    while stack:
        lo, hi, depth = stack.pop()

        box = [Interval.from_fraction(l, h) for l, h in zip(lo, hi)]
        excluded = 0.0
        for f in prune_polys:
            enclosure = interval_eval(f, box)
            if not enclosure.contains_zero():
                excluded = enclosure.distance_from_zero()
                break
        if excluded > 0.0:
            best_certificate = min(best_certificate, excluded)
            continue

        candidates = (
            _repair_candidate(u.probs, lo, hi),
            _simplex_fill(lo, hi),
            _simplex_fill(lo, hi, reverse=True),
        )
        for candidate in candidates:
            if candidate is None:
                continue
            residual = _max_residual(constraints, candidate)
            if residual <= eta:
                return Verdict(Status.FEASIBLE, witness=candidate, residual=residual)

        if depth >= max_depth:
            any_unknown = True
            continue
        widths = [h - l for l, h in zip(lo, hi)]
        split = max(range(n), key=lambda i: widths[i])
        if widths[split] == 0:
            any_unknown = True
            continue
        mid = (lo[split] + hi[split]) / 2
        left_hi = tuple(mid if i == split else h for i, h in enumerate(hi))
        right_lo = tuple(mid if i == split else l for i, l in enumerate(lo))
        stack.append((lo, left_hi, depth + 1))
        stack.append((right_lo, hi, depth + 1))

    if any_unknown:
        return Verdict(Status.UNKNOWN)
    return Verdict(
        Status.INFEASIBLE,
        certificate=0.0 if best_certificate is math.inf else best_certificate,
    )


# ---------------------------------------------------------------------------
# feasible sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FeasibleSet:
    """Grid members whose constraint box is (possibly) feasible.

    `joints[k]` is the distribution at which MI terms are evaluated for member
    `members[k]`: the grid point itself in generic mode, the exactly
    constructed joint in structured mode.  Unknown-verdict members are
    included and flagged.
    """

    members: tuple[int, ...]
    joints: tuple[Distribution, ...]
    unknown: frozenset[int]
    mode: str
    total_candidates: int
    witnesses: dict[int, tuple[Fraction, ...]] = field(default_factory=dict)

    @property
    def unknown_fraction(self) -> float:
        if not self.members:
            return 0.0
        return len(self.unknown) / len(self.members)


def free_block_conditional_shapes(flc: FLCSpec) -> list[tuple[FreeBlock, list[tuple[int, ...]], int]]:
    """Per free block: (block, given-assignments in order, target product size)."""
    assert flc.structured is not None
    sizes = flc.sizes
    out = []
    for block in flc.structured.free_blocks():
        given_sizes = tuple(sizes[i] for i in block.given)
        given_assignments = list(enumerate_assignments(given_sizes))
        out.append((block, given_assignments, product_size(block_target_sizes(block, sizes))))
    return out


def count_structured_candidates(flc: FLCSpec, m: int) -> int:
    total = 1
    for _, given_assignments, cells in free_block_conditional_shapes(flc):
        total *= lattice_size(m, cells) ** len(given_assignments)
    return total


def iter_structured_joints(
    flc: FLCSpec,
    channel: ChannelSpec,
    m: int,
    cap: int = DEFAULT_GRID_CAP,
) -> Iterator[tuple[int, Distribution]]:
    """Exactly feasible joints built from the factorization plan, with every
    free conditional ranging over the denominator-m lattice.  Deterministic
    enumeration order; yields (candidate index, joint)."""
    if flc.structured is None:
        raise ValueError("FLC has no structured factorization plan")
    mismatch = validate_against_channel(flc, channel)
    if mismatch:
        raise ValueError(mismatch)
    count = count_structured_candidates(flc, m)
    if count > cap:
        raise GridCapError(
            f"structured enumeration at m={m} has {count} candidates (cap {cap})"
        )
    q = flatten_channel(channel)
    shapes = free_block_conditional_shapes(flc)
    # one lattice choice per (free block, given assignment), in block order
    slot_lattices = []
    slots_per_block = []
    for _, given_assignments, cells in shapes:
        lattice = list(enumerate_lattice(m, cells))
        slot_lattices.extend([lattice] * len(given_assignments))
        slots_per_block.append(len(given_assignments))
    index = 0
    for combo in itertools.product(*slot_lattices):
        conditionals = []
        pos = 0
        for (_, given_assignments, _), n_slots in zip(shapes, slots_per_block):
            conditionals.append(
                {g: combo[pos + j] for j, g in enumerate(given_assignments)}
            )
            pos += n_slots
        yield index, joint_from_plan(flc.alphabets, flc.structured, conditionals, q)
        index += 1


def build_feasible_set(
    flc: FLCSpec,
    channel: ChannelSpec,
    grid: GridNet,
    eta: Fraction | None = None,
    max_depth: int = DEFAULT_MAX_DEPTH,
    cap: int = DEFAULT_GRID_CAP,
) -> FeasibleSet:
    """Materialize the feasible grid subset.

    Generic path: run `check_box` on every grid point against the
    q-substituted constraints; Feasible and Unknown members are kept.
    Structured path (when the FLC carries a plan): bypass `check_box` and
    enumerate exactly feasible joints over the free blocks at the grid's
    lattice denominator; residuals are identically zero.
    """
    mismatch = validate_against_channel(flc, channel)
    if mismatch:
        raise ValueError(mismatch)

    if flc.structured is not None:
        members = []
        joints = []
        for idx, joint in iter_structured_joints(flc, channel, grid.m, cap=cap):
            members.append(idx)
            joints.append(joint)
        return FeasibleSet(
            members=tuple(members),
            joints=tuple(joints),
            unknown=frozenset(),
            mode="structured",
            total_candidates=len(members),
            witnesses={i: j.probs for i, j in zip(members, joints)},
        )

    if eta is None:
        eta = grid.delta * grid.delta
    q = flatten_channel(channel)
    constraints_p = [substitute_q(f, q) for f in flc.constraints]
    members = []
    joints = []
    unknown = set()
    witnesses = {}
    for idx, point in enumerate(grid.points):
        verdict = check_box(constraints_p, point, grid.delta, eta, max_depth)
        if verdict.status is Status.INFEASIBLE:
            continue
        members.append(idx)
        joints.append(point)
        if verdict.status is Status.UNKNOWN:
            unknown.add(idx)
        else:
            witnesses[idx] = verdict.witness
    return FeasibleSet(
        members=tuple(members),
        joints=tuple(joints),
        unknown=frozenset(unknown),
        mode="generic",
        total_candidates=len(grid.points),
        witnesses=witnesses,
    )
