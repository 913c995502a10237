"""Rate/MI inequality systems ("representations") with polynomial constraints.

An `FLCSpec` couples a list of linear inequalities over rate symbols R_ij and
conditional-MI terms with a list of polynomial constraints tying the joint
distribution p to the channel kernel q.  The concrete file format is JSON
(schema below) so rationals round-trip bit-exactly.

The three classical systems shipped as builders:

* `builtin_dmc`            -- single-user channel, R < I(X;Y) with p(y|x) pinned
                              to the channel action
* `builtin_marton`         -- broadcast inner bound (entropy terms are encoded
                              with an auxiliary copy coordinate, see below)
* `builtin_han_kobayashi`  -- interference-channel inner bound, seven
                              inequalities over (Q, U1, U2, X1, X2, Y1, Y2)

Entropy-term encoding: the inequality grammar only admits I(U;Y|Z) with
pairwise-disjoint coordinate sets, so H(Y|Z) is written I(Y_copy; Y | Z) where
Y_copy is an extra coordinate constrained (by polynomial equations on the pair
marginal) to equal Y.  Structured factorization plans generate the copy
coordinate deterministically, so the constraint holds exactly there.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from flcap.prob_core import (
    Alphabet,
    ChannelSpec,
    Distribution,
    IndexSet,
    enumerate_assignments,
    flatten_channel,
    product_size,
    row_major_index,
)
from flcap.polynomial import (
    Monomial,
    Polynomial,
    polynomial_from_json,
    polynomial_to_json,
)
from flcap.ratio import format_ratio, parse_ratio

RELATIONS = ("<=", "<", ">=", ">", "=")


class FLCParseError(Exception):
    """Malformed FLC document (bad JSON or missing required structure)."""


class FLCValidationError(Exception):
    """Structurally valid document violating a model invariant."""


@dataclass(frozen=True)
class MITerm:
    """alpha * I(U; Y | Z) over coordinate positions of the spec's alphabets."""

    alpha: Fraction
    u: IndexSet
    y: IndexSet
    z: IndexSet

    def __post_init__(self) -> None:
        if not self.u.indices or not self.y.indices:
            raise ValueError("MI term needs nonempty U and Y")
        if self.u.overlaps(self.y) or self.u.overlaps(self.z) or self.y.overlaps(self.z):
            raise ValueError(
                f"MI term index sets overlap: U={self.u.indices} Y={self.y.indices} Z={self.z.indices}"
            )


@dataclass(frozen=True)
class RateTerm:
    """beta * R_ij, users numbered from 1."""

    from_user: int
    to_user: int
    beta: Fraction

    def __post_init__(self) -> None:
        if self.from_user == self.to_user:
            raise ValueError(f"rate term needs distinct users, got R_{self.from_user}{self.to_user}")

    @property
    def pair(self) -> tuple[int, int]:
        return (self.from_user, self.to_user)


@dataclass(frozen=True)
class Inequality:
    """sum(beta R) + sum(alpha I)  <relation>  0."""

    rate_terms: tuple[RateTerm, ...]
    mi_terms: tuple[MITerm, ...]
    relation: str = "<="

    def __post_init__(self) -> None:
        if not self.rate_terms and not self.mi_terms:
            raise ValueError("inequality needs at least one term")
        if self.relation not in RELATIONS:
            raise ValueError(f"relation must be one of {RELATIONS}, got {self.relation!r}")


# ---------------------------------------------------------------------------
# structured factorization plans
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FreeBlock:
    """Targets get an arbitrary conditional distribution given the given-coords."""

    targets: IndexSet
    given: IndexSet


@dataclass(frozen=True)
class ChannelBlock:
    """Targets are drawn per the channel kernel: p(t|g) = q[q_index[(t, g)]]."""

    targets: IndexSet
    given: IndexSet
    q_index: dict[tuple[tuple[int, ...], tuple[int, ...]], int]


@dataclass(frozen=True)
class DeterministicBlock:
    """Targets are a function of the given-coords: t = table[g]."""

    targets: IndexSet
    given: IndexSet
    table: dict[tuple[int, ...], tuple[int, ...]]


Block = FreeBlock | ChannelBlock | DeterministicBlock


@dataclass(frozen=True)
class FactorizationPlan:
    blocks: tuple[Block, ...]

    def free_blocks(self) -> list[FreeBlock]:
        return [b for b in self.blocks if isinstance(b, FreeBlock)]

    def validate(self, n_coords: int) -> None:
        seen: set[int] = set()
        for k, block in enumerate(self.blocks):
            for t in block.targets:
                if not (0 <= t < n_coords):
                    raise FLCValidationError(f"plan block {k}: target {t} out of range")
                if t in seen:
                    raise FLCValidationError(f"plan block {k}: coordinate {t} targeted twice")
            for g in block.given:
                if g not in seen:
                    raise FLCValidationError(
                        f"plan block {k}: given coordinate {g} not produced by an earlier block"
                    )
            seen.update(block.targets)
        if seen != set(range(n_coords)):
            missing = sorted(set(range(n_coords)) - seen)
            raise FLCValidationError(f"plan covers no block for coordinates {missing}")


# ---------------------------------------------------------------------------
# the spec itself
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FLCSpec:
    alphabets: tuple[Alphabet, ...]
    n_users: int
    representation: tuple[Inequality, ...]
    constraints: tuple[Polynomial, ...]
    structured: FactorizationPlan | None = None

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(a.size for a in self.alphabets)

    @property
    def joint_size(self) -> int:
        return product_size(self.sizes)

    def rate_pairs(self) -> list[tuple[int, int]]:
        """Distinct rate symbols used across the representation, sorted."""
        return sorted({t.pair for ineq in self.representation for t in ineq.rate_terms})

    def max_q_index(self) -> int:
        indices = [f.max_q_index() for f in self.constraints]
        if self.structured is not None:
            for block in self.structured.blocks:
                if isinstance(block, ChannelBlock) and block.q_index:
                    indices.append(max(block.q_index.values()))
        return max(indices, default=-1)


def validate_flc(spec: FLCSpec) -> None:
    """Raise FLCValidationError naming the first violated rule."""
    if not spec.representation:
        raise FLCValidationError("no representation")
    if not spec.alphabets:
        raise FLCValidationError("no alphabets")
    names = [a.name for a in spec.alphabets]
    if len(set(names)) != len(names):
        raise FLCValidationError(f"duplicate alphabet names in {names}")
    k = len(spec.alphabets)
    for r, ineq in enumerate(spec.representation):
        for term in ineq.mi_terms:
            for ix in (*term.u, *term.y, *term.z):
                if not (0 <= ix < k):
                    raise FLCValidationError(
                        f"representation[{r}]: MI term coordinate {ix} out of range"
                    )
        for term in ineq.rate_terms:
            for user in term.pair:
                if not (1 <= user <= spec.n_users):
                    raise FLCValidationError(
                        f"representation[{r}]: rate user {user} out of range 1..{spec.n_users}"
                    )
    for c, poly in enumerate(spec.constraints):
        if poly.max_p_index() >= spec.joint_size:
            raise FLCValidationError(
                f"constraints[{c}]: p variable {poly.max_p_index()} out of range "
                f"(joint size {spec.joint_size})"
            )
    if spec.structured is not None:
        spec.structured.validate(k)


# ---------------------------------------------------------------------------
# JSON (de)serialization
# ---------------------------------------------------------------------------


def _block_to_json(block: Block) -> dict:
    base = {"targets": list(block.targets), "given": list(block.given)}
    if isinstance(block, FreeBlock):
        return {"kind": "free", **base}
    if isinstance(block, ChannelBlock):
        entries = [
            {"t": list(t), "g": list(g), "q": qi}
            for (t, g), qi in sorted(block.q_index.items())
        ]
        return {"kind": "channel", **base, "map": entries}
    entries = [{"g": list(g), "t": list(t)} for g, t in sorted(block.table.items())]
    return {"kind": "deterministic", **base, "table": entries}


def _block_from_json(doc: dict) -> Block:
    targets = IndexSet.of(*[int(i) for i in doc["targets"]])
    given = IndexSet.of(*[int(i) for i in doc["given"]])
    kind = doc["kind"]
    if kind == "free":
        return FreeBlock(targets, given)
    if kind == "channel":
        q_index = {
            (tuple(int(v) for v in e["t"]), tuple(int(v) for v in e["g"])): int(e["q"])
            for e in doc["map"]
        }
        return ChannelBlock(targets, given, q_index)
    if kind == "deterministic":
        table = {
            tuple(int(v) for v in e["g"]): tuple(int(v) for v in e["t"])
            for e in doc["table"]
        }
        return DeterministicBlock(targets, given, table)
    raise FLCParseError(f"unknown plan block kind {kind!r}")


def print_flc(spec: FLCSpec) -> str:
    doc = {
        "alphabets": [{"name": a.name, "size": a.size} for a in spec.alphabets],
        "n_users": spec.n_users,
        "representation": [
            {
                "rates": [
                    {"i": t.from_user, "j": t.to_user, "beta": format_ratio(t.beta)}
                    for t in ineq.rate_terms
                ],
                "mi": [
                    {
                        "alpha": format_ratio(t.alpha),
                        "U": list(t.u),
                        "Y": list(t.y),
                        "Z": list(t.z),
                    }
                    for t in ineq.mi_terms
                ],
                "rel": ineq.relation,
            }
            for ineq in spec.representation
        ],
        "constraints": [polynomial_to_json(f) for f in spec.constraints],
    }
    if spec.structured is not None:
        doc["structured"] = {"blocks": [_block_to_json(b) for b in spec.structured.blocks]}
    return json.dumps(doc, indent=2)


def parse_flc(text: str) -> FLCSpec:
    """Parse and validate an FLC document; raises FLCParseError with line and
    column for malformed JSON, FLCValidationError for invariant violations."""
    if not text.strip():
        raise FLCParseError("empty file: no representation")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FLCParseError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise FLCParseError("top-level value must be an object")

    try:
        alphabets = tuple(
            Alphabet(str(a["name"]), int(a["size"])) for a in doc.get("alphabets", [])
        )
        n_users = int(doc.get("n_users", 0))
        inequalities = []
        for r, entry in enumerate(doc.get("representation", [])):
            try:
                rates = tuple(
                    RateTerm(int(t["i"]), int(t["j"]), parse_ratio(t["beta"]))
                    for t in entry.get("rates", [])
                )
                mi = tuple(
                    MITerm(
                        parse_ratio(t["alpha"]),
                        IndexSet.of(*[int(i) for i in t["U"]]),
                        IndexSet.of(*[int(i) for i in t["Y"]]),
                        IndexSet.of(*[int(i) for i in t.get("Z", [])]),
                    )
                    for t in entry.get("mi", [])
                )
                inequalities.append(Inequality(rates, mi, str(entry.get("rel", "<="))))
            except ValueError as exc:
                raise FLCValidationError(f"representation[{r}]: {exc}") from None
        constraints = tuple(polynomial_from_json(c) for c in doc.get("constraints", []))
        structured = None
        if "structured" in doc and doc["structured"] is not None:
            structured = FactorizationPlan(
                tuple(_block_from_json(b) for b in doc["structured"]["blocks"])
            )
    except (KeyError, TypeError) as exc:
        raise FLCParseError(f"missing or malformed field: {exc}") from None

    spec = FLCSpec(alphabets, n_users, tuple(inequalities), constraints, structured)
    validate_flc(spec)
    return spec


# ---------------------------------------------------------------------------
# channel compatibility
# ---------------------------------------------------------------------------


def validate_against_channel(flc: FLCSpec, channel: ChannelSpec) -> str | None:
    """None if the FLC's q-variables exactly cover the flattened channel and
    the user counts agree, else a mismatch report."""
    if channel.n_users != flc.n_users:
        return f"channel has {channel.n_users} users, FLC expects {flc.n_users}"
    max_q = flc.max_q_index()
    if max_q < 0:
        return None
    expected = max_q + 1
    actual = len(flatten_channel(channel))
    if expected != actual:
        return f"q length {expected} != channel q length {actual}"
    return None


# ---------------------------------------------------------------------------
# joint construction from a factorization plan
# ---------------------------------------------------------------------------


def block_target_sizes(block: Block, sizes: Sequence[int]) -> tuple[int, ...]:
    return tuple(sizes[i] for i in block.targets)


def joint_from_plan(
    alphabets: Sequence[Alphabet],
    plan: FactorizationPlan,
    free_conditionals: Sequence[Mapping[tuple[int, ...], Sequence[Fraction]]],
    q_flat: Sequence[Fraction],
) -> Distribution:
    """Multiply the plan's block factors into an exact joint distribution.

    `free_conditionals[k]` supplies, for the k-th free block, a map from each
    given-assignment to a probability vector over the block's target product
    (row-major in target order).
    """
    sizes = tuple(a.size for a in alphabets)
    n_free = len(plan.free_blocks())
    if len(free_conditionals) != n_free:
        raise ValueError(f"need {n_free} free-block conditionals, got {len(free_conditionals)}")
    free_pos: list[int | None] = []
    next_free = 0
    for block in plan.blocks:
        free_pos.append(next_free if isinstance(block, FreeBlock) else None)
        if isinstance(block, FreeBlock):
            next_free += 1

    probs = []
    for assignment in enumerate_assignments(sizes):
        p = Fraction(1)
        for pos, block in enumerate(plan.blocks):
            t = tuple(assignment[i] for i in block.targets)
            g = tuple(assignment[i] for i in block.given)
            if isinstance(block, FreeBlock):
                vec = free_conditionals[free_pos[pos]][g]
                factor = vec[row_major_index(block_target_sizes(block, sizes), t)]
            elif isinstance(block, ChannelBlock):
                factor = q_flat[block.q_index[(t, g)]]
            else:
                factor = Fraction(1) if block.table[g] == t else Fraction(0)
            if factor == 0:
                p = Fraction(0)
                break
            p *= factor
        probs.append(p)
    return Distribution(tuple(alphabets), tuple(probs))


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------


def marginal_form(sizes: Sequence[int], fixed: Mapping[int, int]) -> Polynomial:
    """Linear polynomial summing the p-variables consistent with the partial
    assignment `fixed` (coordinate position -> value)."""
    terms = []
    for assignment in enumerate_assignments(tuple(sizes)):
        if all(assignment[i] == v for i, v in fixed.items()):
            terms.append(Monomial.make(1, p={row_major_index(sizes, assignment): 1}))
    return Polynomial.from_monomials(terms)


def builtin_dmc(in_size: int, out_size: int) -> FLCSpec:
    """R < I(X;Y) with p(x,y) pinned to p(x) c(y|x)."""
    if in_size < 2 or out_size < 2:
        raise ValueError("alphabet sizes must be >= 2")
    alphabets = (Alphabet("X", in_size), Alphabet("Y", out_size))
    sizes = (in_size, out_size)
    rep = (
        Inequality(
            rate_terms=(RateTerm(1, 2, Fraction(1)),),
            mi_terms=(MITerm(Fraction(-1), IndexSet.of(0), IndexSet.of(1), IndexSet.of()),),
            relation="<",
        ),
    )

    def q_idx(y: int, x: int) -> int:
        # channel axes: (out_1(=1), out_2(=|Y|), state, in_1(=|X|), in_2(=1), state)
        return y * in_size + x

    constraints = []
    for x in range(in_size):
        px = marginal_form(sizes, {0: x})
        for y in range(out_size):
            joint = Polynomial.p_var(row_major_index(sizes, (x, y)))
            constraints.append(joint - px * Polynomial.q_var(q_idx(y, x)))

    plan = FactorizationPlan(
        (
            FreeBlock(IndexSet.of(0), IndexSet.of()),
            ChannelBlock(
                IndexSet.of(1),
                IndexSet.of(0),
                {((y,), (x,)): q_idx(y, x) for x in range(in_size) for y in range(out_size)},
            ),
        )
    )
    return FLCSpec(alphabets, 2, rep, tuple(constraints), plan)


def builtin_marton(x_size: int, y1_size: int, y2_size: int, u_size: int) -> FLCSpec:
    """Broadcast inner bound: R1 <= H(Y1), R2 <= I(U;Y2),
    R1+R2 <= H(Y1|U) + I(U;Y2), for some p(u,x); H-terms use a Y1 copy."""
    if min(x_size, y1_size, y2_size) < 2:
        raise ValueError("channel alphabet sizes must be >= 2")
    if u_size < 1:
        raise ValueError("auxiliary alphabet size must be >= 1")
    # coordinates: 0=U, 1=X, 2=Y1, 3=Y2, 4=Y1_copy
    alphabets = (
        Alphabet("U", u_size),
        Alphabet("X", x_size),
        Alphabet("Y1", y1_size),
        Alphabet("Y2", y2_size),
        Alphabet("Y1_copy", y1_size),
    )
    sizes = tuple(a.size for a in alphabets)
    one = Fraction(1)
    m_one = Fraction(-1)
    rep = (
        # R1 <= H(Y1) = I(Y1_copy; Y1)
        Inequality((RateTerm(1, 2, one),), (MITerm(m_one, IndexSet.of(4), IndexSet.of(2), IndexSet.of()),)),
        # R2 <= I(U; Y2)
        Inequality((RateTerm(1, 3, one),), (MITerm(m_one, IndexSet.of(0), IndexSet.of(3), IndexSet.of()),)),
        # R1 + R2 <= H(Y1|U) + I(U;Y2)
        Inequality(
            (RateTerm(1, 2, one), RateTerm(1, 3, one)),
            (
                MITerm(m_one, IndexSet.of(4), IndexSet.of(2), IndexSet.of(0)),
                MITerm(m_one, IndexSet.of(0), IndexSet.of(3), IndexSet.of()),
            ),
        ),
    )

    def q_idx(y1: int, y2: int, x: int) -> int:
        # channel axes: (1, |Y1|, |Y2|, state, |X|, 1, 1, state)
        return (y1 * y2_size + y2) * x_size + x

    constraints = []
    # (Y1, Y2) depend on (U, X) only through X, with law q
    for u in range(u_size):
        for x in range(x_size):
            p_ux = marginal_form(sizes, {0: u, 1: x})
            for y1 in range(y1_size):
                for y2 in range(y2_size):
                    p_uxy = marginal_form(sizes, {0: u, 1: x, 2: y1, 3: y2})
                    constraints.append(p_uxy - p_ux * Polynomial.q_var(q_idx(y1, y2, x)))
    # Y1_copy == Y1
    for y1 in range(y1_size):
        for yc in range(y1_size):
            if yc != y1:
                constraints.append(marginal_form(sizes, {2: y1, 4: yc}))

    plan = FactorizationPlan(
        (
            FreeBlock(IndexSet.of(0), IndexSet.of()),
            FreeBlock(IndexSet.of(1), IndexSet.of(0)),
            ChannelBlock(
                IndexSet.of(2, 3),
                IndexSet.of(1),
                {
                    ((y1, y2), (x,)): q_idx(y1, y2, x)
                    for x in range(x_size)
                    for y1 in range(y1_size)
                    for y2 in range(y2_size)
                },
            ),
            DeterministicBlock(IndexSet.of(4), IndexSet.of(2), {(y1,): (y1,) for y1 in range(y1_size)}),
        )
    )
    return FLCSpec(alphabets, 3, rep, tuple(constraints), plan)


def builtin_han_kobayashi(
    q_size: int,
    u1_size: int,
    u2_size: int,
    x1_size: int,
    x2_size: int,
    y1_size: int,
    y2_size: int,
) -> FLCSpec:
    """Interference-channel inner bound over (Q, U1, U2, X1, X2, Y1, Y2) with
    the factorization p(q) p(u1,x1|q) p(u2,x2|q) and the channel acting on
    (x1, x2)."""
    for s in (q_size, u1_size, u2_size, x1_size, x2_size, y1_size, y2_size):
        if s < 1:
            raise ValueError("alphabet sizes must be >= 1")
    # coordinates: 0=Q, 1=U1, 2=U2, 3=X1, 4=X2, 5=Y1, 6=Y2
    alphabets = (
        Alphabet("Q", q_size),
        Alphabet("U1", u1_size),
        Alphabet("U2", u2_size),
        Alphabet("X1", x1_size),
        Alphabet("X2", x2_size),
        Alphabet("Y1", y1_size),
        Alphabet("Y2", y2_size),
    )
    sizes = tuple(a.size for a in alphabets)
    one = Fraction(1)
    two = Fraction(2)
    m_one = Fraction(-1)
    ix = IndexSet.of

    def mi(u: IndexSet, y: IndexSet, z: IndexSet) -> MITerm:
        return MITerm(m_one, u, y, z)

    r1 = RateTerm(1, 3, one)
    r2 = RateTerm(2, 4, one)
    rep = (
        Inequality((r1,), (mi(ix(3), ix(5), ix(0, 2)),), "<"),
        Inequality((r2,), (mi(ix(4), ix(6), ix(0, 1)),), "<"),
        Inequality((r1, r2), (mi(ix(2, 3), ix(5), ix(0)), mi(ix(4), ix(6), ix(0, 1, 2))), "<"),
        Inequality((r1, r2), (mi(ix(1, 4), ix(6), ix(0)), mi(ix(3), ix(5), ix(0, 1, 2))), "<"),
        Inequality((r1, r2), (mi(ix(2, 3), ix(5), ix(0, 1)), mi(ix(1, 4), ix(6), ix(0, 2))), "<"),
        Inequality(
            (RateTerm(1, 3, two), r2),
            (mi(ix(2, 3), ix(5), ix(0)), mi(ix(3), ix(5), ix(0, 1, 2)), mi(ix(1, 4), ix(6), ix(0, 2))),
            "<",
        ),
        Inequality(
            (r1, RateTerm(2, 4, two)),
            (mi(ix(1, 4), ix(6), ix(0)), mi(ix(4), ix(6), ix(0, 1, 2)), mi(ix(2, 3), ix(5), ix(0, 1))),
            "<",
        ),
    )

    def q_idx(y1: int, y2: int, x1: int, x2: int) -> int:
        # channel axes: (1, 1, |Y1|, |Y2|, state, |X1|, |X2|, 1, 1, state)
        return ((y1 * y2_size + y2) * x1_size + x1) * x2_size + x2

    constraints = []
    # (U1, X1) independent of (U2, X2) given Q:
    # p(q,u1,x1,u2,x2) p(q) = p(q,u1,x1) p(q,u2,x2)
    for q in range(q_size):
        p_q = marginal_form(sizes, {0: q})
        for u1 in range(u1_size):
            for x1 in range(x1_size):
                p_left = marginal_form(sizes, {0: q, 1: u1, 3: x1})
                for u2 in range(u2_size):
                    for x2 in range(x2_size):
                        p_right = marginal_form(sizes, {0: q, 2: u2, 4: x2})
                        p_all = marginal_form(sizes, {0: q, 1: u1, 2: u2, 3: x1, 4: x2})
                        constraints.append(p_all * p_q - p_left * p_right)
    # (Y1, Y2) depend on everything only through (X1, X2), with law q
    for assignment in enumerate_assignments(sizes):
        q, u1, u2, x1, x2, y1, y2 = assignment
        joint = Polynomial.p_var(row_major_index(sizes, assignment))
        p_front = marginal_form(sizes, {0: q, 1: u1, 2: u2, 3: x1, 4: x2})
        constraints.append(joint - p_front * Polynomial.q_var(q_idx(y1, y2, x1, x2)))

    plan = FactorizationPlan(
        (
            FreeBlock(ix(0), ix()),
            FreeBlock(ix(1, 3), ix(0)),
            FreeBlock(ix(2, 4), ix(0)),
            ChannelBlock(
                ix(5, 6),
                ix(3, 4),
                {
                    ((y1, y2), (x1, x2)): q_idx(y1, y2, x1, x2)
                    for x1 in range(x1_size)
                    for x2 in range(x2_size)
                    for y1 in range(y1_size)
                    for y2 in range(y2_size)
                },
            ),
        )
    )
    return FLCSpec(alphabets, 4, rep, tuple(constraints), plan)
