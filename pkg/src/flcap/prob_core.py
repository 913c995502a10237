"""Exact-rational probability vectors, channel tensors, and marginalization.

All probability mass is carried as `fractions.Fraction`, so sums, marginals
and constraint residuals are exact; floating point enters only when entropies
are taken (see `info_measures`).

Canonical index order, used everywhere a joint object is flattened:
row-major over the declared axis list.  For a `Distribution` the axes are its
alphabets in declaration order.  For a `ChannelSpec` the axes are

    (output_1, ..., output_n, next_state, input_1, ..., input_n, prev_state)

i.e. outputs outermost, previous state innermost.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Iterator, Sequence

from flcap.ratio import format_ratio, parse_ratio

ZERO = Fraction(0)
ONE = Fraction(1)


@dataclass(frozen=True)
class Alphabet:
    """A named finite set; elements are the integers 0..size-1."""

    name: str
    size: int

    def __post_init__(self) -> None:
        if self.size < 1:
            raise ValueError(f"alphabet {self.name!r} must have size >= 1, got {self.size}")


@dataclass(frozen=True)
class IndexSet:
    """Sorted, distinct positions into an alphabet list."""

    indices: tuple[int, ...]

    def __post_init__(self) -> None:
        if list(self.indices) != sorted(set(self.indices)):
            raise ValueError(f"index set must be sorted and distinct, got {self.indices}")

    @classmethod
    def of(cls, *indices: int) -> "IndexSet":
        return cls(tuple(sorted(set(indices))))

    @classmethod
    def coerce(cls, value: "IndexSet | Iterable[int]") -> "IndexSet":
        if isinstance(value, IndexSet):
            return value
        return cls.of(*value)

    def union(self, other: "IndexSet") -> "IndexSet":
        return IndexSet.of(*self.indices, *other.indices)

    def overlaps(self, other: "IndexSet") -> bool:
        return bool(set(self.indices) & set(other.indices))

    def __iter__(self) -> Iterator[int]:
        return iter(self.indices)

    def __len__(self) -> int:
        return len(self.indices)


def product_size(sizes: Iterable[int]) -> int:
    n = 1
    for s in sizes:
        n *= s
    return n


def row_major_index(sizes: Sequence[int], assignment: Sequence[int]) -> int:
    """Flat index of `assignment` in the row-major layout over `sizes`."""
    idx = 0
    for size, value in zip(sizes, assignment):
        idx = idx * size + value
    return idx


def enumerate_assignments(sizes: Sequence[int]) -> Iterator[tuple[int, ...]]:
    """All assignments over `sizes` in row-major (flat-index) order."""
    return itertools.product(*(range(s) for s in sizes))


@dataclass(frozen=True)
class Distribution:
    """Probability vector over a product alphabet, in canonical row-major order."""

    alphabets: tuple[Alphabet, ...]
    probs: tuple[Fraction, ...]

    def __post_init__(self) -> None:
        expected = product_size(a.size for a in self.alphabets)
        if len(self.probs) != expected:
            raise ValueError(
                f"probability vector has length {len(self.probs)}, "
                f"product alphabet has size {expected}"
            )

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(a.size for a in self.alphabets)

    def prob(self, assignment: Sequence[int]) -> Fraction:
        return self.probs[row_major_index(self.sizes, assignment)]


def validate_distribution(d: Distribution) -> str | None:
    """Return None if `d` is a valid distribution, else a message naming the
    first failing entry (negativity checked before the sum)."""
    for i, p in enumerate(d.probs):
        if p < 0:
            return f"negative entry at index {i}"
    total = sum(d.probs, ZERO)
    if total != 1:
        return f"sum = {total} != 1"
    return None


@lru_cache(maxsize=4096)
def _marginal_map(sizes: tuple[int, ...], keep: tuple[int, ...]) -> tuple[int, ...]:
    """For each flat source index, the flat destination index of its marginal cell."""
    kept_sizes = tuple(sizes[i] for i in keep)
    out = []
    for assignment in enumerate_assignments(sizes):
        out.append(row_major_index(kept_sizes, tuple(assignment[i] for i in keep)))
    return tuple(out)


def marginalize(d: Distribution, keep: IndexSet | Iterable[int]) -> Distribution:
    """Exact marginal of `d` onto the kept coordinate positions.

    `keep` may be empty, giving the trivial distribution on a one-point space.
    """
    keep = IndexSet.coerce(keep)
    sizes = d.sizes
    for i in keep:
        if i < 0 or i >= len(sizes):
            raise IndexError(f"coordinate {i} out of range for {len(sizes)} alphabets")
    dest = _marginal_map(sizes, keep.indices)
    kept_alphabets = tuple(d.alphabets[i] for i in keep)
    acc = [ZERO] * product_size(a.size for a in kept_alphabets)
    for src, p in enumerate(d.probs):
        if p:
            acc[dest[src]] += p
    return Distribution(kept_alphabets, tuple(acc))


@dataclass(frozen=True)
class ChannelSpec:
    """Conditional kernel c(outputs, next_state | inputs, prev_state).

    One input and one output alphabet per user (size 1 where a user does not
    transmit or receive).  `kernel` is the dense flat vector in the canonical
    axis order documented at module top; `flatten_channel` returns it as-is.
    """

    input_alphabets: tuple[Alphabet, ...]
    output_alphabets: tuple[Alphabet, ...]
    state_alphabet: Alphabet
    kernel: tuple[Fraction, ...]
    initial_state: int = 0

    def __post_init__(self) -> None:
        if len(self.input_alphabets) != len(self.output_alphabets):
            raise ValueError(
                "need one input and one output alphabet per user "
                f"(got {len(self.input_alphabets)} inputs, {len(self.output_alphabets)} outputs)"
            )
        if len(self.kernel) != product_size(self.axis_sizes):
            raise ValueError(
                f"kernel length {len(self.kernel)} != expected {product_size(self.axis_sizes)}"
            )
        if not (0 <= self.initial_state < self.state_alphabet.size):
            raise ValueError(f"initial state {self.initial_state} out of range")

    @property
    def n_users(self) -> int:
        return len(self.input_alphabets)

    @property
    def axis_sizes(self) -> tuple[int, ...]:
        """(out sizes..., n_states, in sizes..., n_states), row-major layout."""
        return (
            tuple(b.size for b in self.output_alphabets)
            + (self.state_alphabet.size,)
            + tuple(a.size for a in self.input_alphabets)
            + (self.state_alphabet.size,)
        )

    def value(
        self,
        outputs: Sequence[int],
        next_state: int,
        inputs: Sequence[int],
        prev_state: int,
    ) -> Fraction:
        assignment = (*outputs, next_state, *inputs, prev_state)
        return self.kernel[row_major_index(self.axis_sizes, assignment)]

    def condition_sizes(self) -> tuple[int, ...]:
        return tuple(a.size for a in self.input_alphabets) + (self.state_alphabet.size,)

    def outcome_sizes(self) -> tuple[int, ...]:
        return tuple(b.size for b in self.output_alphabets) + (self.state_alphabet.size,)


def validate_channel(c: ChannelSpec) -> str | None:
    """None if every entry is >= 0 and every conditional row sums to exactly 1."""
    for i, p in enumerate(c.kernel):
        if p < 0:
            return f"negative kernel entry at flat index {i}"
    for cond in enumerate_assignments(c.condition_sizes()):
        inputs, prev = cond[:-1], cond[-1]
        total = ZERO
        for outcome in enumerate_assignments(c.outcome_sizes()):
            total += c.value(outcome[:-1], outcome[-1], inputs, prev)
        if total != 1:
            return f"conditional row for inputs={inputs}, prev_state={prev} sums to {total} != 1"
    return None


def flatten_channel(c: ChannelSpec) -> tuple[Fraction, ...]:
    """The channel's flat rational vector in the canonical axis order."""
    return c.kernel


def channel_from_flat(
    input_sizes: Sequence[int],
    output_sizes: Sequence[int],
    n_states: int,
    flat: Sequence[Fraction],
    initial_state: int = 0,
) -> ChannelSpec:
    """Inverse of `flatten_channel` for a given shape (round-trip helper)."""
    ins = tuple(Alphabet(f"A{i+1}", s) for i, s in enumerate(input_sizes))
    outs = tuple(Alphabet(f"B{i+1}", s) for i, s in enumerate(output_sizes))
    return ChannelSpec(ins, outs, Alphabet("S", n_states), tuple(Fraction(x) for x in flat), initial_state)


def channel_to_json(c: ChannelSpec) -> str:
    """Serialize to the channel file format (sparse kernel, "num/den" rationals)."""
    entries = []
    n_in = c.n_users
    for assignment in enumerate_assignments(c.axis_sizes):
        p = c.kernel[row_major_index(c.axis_sizes, assignment)]
        if p == 0:
            continue
        outs = assignment[:n_in]
        nxt = assignment[n_in]
        ins = assignment[n_in + 1 : 2 * n_in + 1]
        prev = assignment[2 * n_in + 1]
        entries.append(
            {"out": list(outs), "next": nxt, "in": list(ins), "prev": prev, "p": format_ratio(p)}
        )
    doc = {
        "inputs": [a.size for a in c.input_alphabets],
        "outputs": [b.size for b in c.output_alphabets],
        "states": c.state_alphabet.size,
        "initial_state": c.initial_state,
        "kernel": entries,
    }
    return json.dumps(doc, indent=2)


def channel_from_json(text: str) -> ChannelSpec:
    """Parse the channel file format.  Omitted kernel entries are zero."""
    doc = json.loads(text)
    input_sizes = [int(s) for s in doc["inputs"]]
    output_sizes = [int(s) for s in doc["outputs"]]
    n_states = int(doc["states"])
    initial = int(doc.get("initial_state", 0))
    axis_sizes = (*output_sizes, n_states, *input_sizes, n_states)
    flat = [ZERO] * product_size(axis_sizes)
    for entry in doc["kernel"]:
        assignment = (
            *[int(v) for v in entry["out"]],
            int(entry["next"]),
            *[int(v) for v in entry["in"]],
            int(entry["prev"]),
        )
        if len(assignment) != len(axis_sizes):
            raise ValueError(f"kernel entry {entry} does not match channel shape")
        for v, s in zip(assignment, axis_sizes):
            if not (0 <= v < s):
                raise ValueError(f"kernel entry {entry} out of range for shape {axis_sizes}")
        flat[row_major_index(axis_sizes, assignment)] = parse_ratio(entry["p"])
    return channel_from_flat(input_sizes, output_sizes, n_states, flat, initial)
