"""Probabilistic finite automata with an absorbing accept state, the finite
state channels derived from them, and the associated rate bounds.

The derived channel has one "good" state (the PFA's accept state): while in
it, a noiseless payload alphabet of size P is carried per use (K = ln P nats);
in every other state the channel emits a dedicated error symbol.  Whether the
state is the accept state is observable at both ends; this partial state
information is carried as metadata rather than folded into the output
alphabet.
"""

from __future__ import annotations

import itertools
import json
import math
import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from flcap.prob_core import Alphabet, ChannelSpec, row_major_index
from flcap.ratio import format_ratio, parse_ratio

DEFAULT_SEARCH_CAP = 10**6
DEFAULT_KERNEL_CAP = 10**7

Matrix = tuple[tuple[Fraction, ...], ...]


class SearchCapError(Exception):
    """Bounded search or channel construction exceeds the configured cap."""


@dataclass(frozen=True)
class PFA:
    """(states, symbols, per-symbol row-stochastic matrices, start, accept)."""

    n_states: int
    symbols: tuple[str, ...]
    matrices: dict[str, Matrix]
    start: int
    accept: int

    def __post_init__(self) -> None:
        if self.n_states < 1:
            raise ValueError("PFA needs at least one state")
        if not self.symbols:
            raise ValueError("PFA needs a nonempty input alphabet")
        if len(set(self.symbols)) != len(self.symbols):
            raise ValueError(f"duplicate input symbols in {self.symbols}")
        for index in (self.start, self.accept):
            if not (0 <= index < self.n_states):
                raise ValueError(f"state index {index} out of range")
        if set(self.matrices) != set(self.symbols):
            raise ValueError("need exactly one transition matrix per symbol")
        for symbol, matrix in self.matrices.items():
            if len(matrix) != self.n_states or any(len(row) != self.n_states for row in matrix):
                raise ValueError(f"matrix for {symbol!r} is not {self.n_states}x{self.n_states}")
            for i, row in enumerate(matrix):
                if any(x < 0 for x in row):
                    raise ValueError(f"negative entry in row {i} of matrix {symbol!r}")
                if sum(row, Fraction(0)) != 1:
                    raise ValueError(f"row {i} of matrix {symbol!r} does not sum to 1")
            if matrix[self.accept][self.accept] != 1:
                raise ValueError(f"accept state not absorbing under symbol {symbol!r}")

    def step(self, state_dist: Sequence[Fraction], symbol: str) -> tuple[Fraction, ...]:
        """One exact vector-matrix product."""
        matrix = self.matrices[symbol]
        out = [Fraction(0)] * self.n_states
        for i, mass in enumerate(state_dist):
            if mass:
                row = matrix[i]
                for j in range(self.n_states):
                    if row[j]:
                        out[j] += mass * row[j]
        return tuple(out)

    def start_vector(self) -> tuple[Fraction, ...]:
        vec = [Fraction(0)] * self.n_states
        vec[self.start] = Fraction(1)
        return tuple(vec)


def acceptance_prob(pfa: PFA, string: Iterable[str]) -> Fraction:
    """Exact probability of sitting in the accept state after reading the
    string; with the absorbing accept state this equals the probability of
    having entered it at some prefix."""
    vec = pfa.start_vector()
    for symbol in string:
        if symbol not in pfa.matrices:
            raise ValueError(f"unknown input symbol {symbol!r}")
        vec = pfa.step(vec, symbol)
    return vec[pfa.accept]


@dataclass(frozen=True)
class AcceptanceProfile:
    string: tuple[str, ...]
    prob_in_accept: Fraction
    per_prefix: tuple[Fraction, ...]  # accept probability after each prefix length 0..len


def acceptance_profile(pfa: PFA, string: Iterable[str]) -> AcceptanceProfile:
    string = tuple(string)
    vec = pfa.start_vector()
    probs = [vec[pfa.accept]]
    for symbol in string:
        if symbol not in pfa.matrices:
            raise ValueError(f"unknown input symbol {symbol!r}")
        vec = pfa.step(vec, symbol)
        probs.append(vec[pfa.accept])
    return AcceptanceProfile(string, probs[-1], tuple(probs))


@dataclass(frozen=True)
class EmptinessSearchResult:
    """Outcome of the bounded acceptance-threshold search.

    `found` proves the thresholded language nonempty (the witness can be
    extended arbitrarily thanks to the absorbing accept state); not-found up
    to max_len proves nothing, which is the nature of the problem.
    """

    found: bool
    tau: Fraction
    max_len: int
    witness: tuple[str, ...] | None
    witness_prob: Fraction | None
    best_string: tuple[str, ...]
    best_prob: Fraction


def bounded_emptiness_search(
    pfa: PFA,
    tau: Fraction,
    max_len: int,
    cap: int = DEFAULT_SEARCH_CAP,
) -> EmptinessSearchResult:
    """Exhaustive search for a string of length <= max_len whose acceptance
    probability strictly exceeds tau, shortest (then lexicographic in symbol
    order) witness first."""
    tau = Fraction(tau)
    if max_len < 0:
        raise ValueError("max_len must be >= 0")
    if len(pfa.symbols) ** max_len > cap:
        raise SearchCapError(
            f"{len(pfa.symbols)}^{max_len} strings exceeds the search cap {cap}"
        )
    start = pfa.start_vector()
    best_string: tuple[str, ...] = ()
    best_prob = start[pfa.accept]
    if best_prob > tau:
        return EmptinessSearchResult(True, tau, max_len, (), best_prob, (), best_prob)
    level: list[tuple[tuple[str, ...], tuple[Fraction, ...]]] = [((), start)]
    for _ in range(max_len):
        next_level = []
        for prefix, vec in level:
            for symbol in pfa.symbols:
                new_vec = pfa.step(vec, symbol)
                string = prefix + (symbol,)
                prob = new_vec[pfa.accept]
                if prob > best_prob:
                    best_string, best_prob = string, prob
                if prob > tau:
                    return EmptinessSearchResult(True, tau, max_len, string, prob, string, prob)
                next_level.append((string, new_vec))
        level = next_level
    return EmptinessSearchResult(False, tau, max_len, None, None, best_string, best_prob)


# ---------------------------------------------------------------------------
# channel construction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PfaChannelMeta:
    """Observation convention for the derived channel: both ends see whether
    the state is the accept state."""

    payload_size: int
    effective_k: float
    error_index: int  # output index of the error symbol
    accept_observation: tuple[bool, ...]  # per state


def payload_size_for(k_nats: float) -> int:
    """Payload alphabet size P with ln P = K; K is quantized to ln(integer)."""
    if k_nats <= 0:
        raise ValueError(f"K must be positive, got {k_nats}")
    return max(2, math.ceil(math.exp(k_nats) - 1e-9))


def build_channel_from_pfa(
    pfa: PFA,
    k_nats: float,
    kernel_cap: int = DEFAULT_KERNEL_CAP,
) -> tuple[ChannelSpec, PfaChannelMeta]:
    """Two-terminal state channel: the input is (PFA symbol, payload word);
    the state evolves by the symbol's matrix; the output reproduces the
    payload noiselessly while the previous state is the accept state and is
    the error symbol otherwise."""
    payload = payload_size_for(k_nats)
    n_sym = len(pfa.symbols)
    n_states = pfa.n_states
    in_size = n_sym * payload
    out_size = payload + 1
    kernel_len = in_size * out_size * n_states * n_states
    if kernel_len > kernel_cap:
        raise SearchCapError(
            f"channel kernel needs {kernel_len} entries for payload {payload} (cap {kernel_cap})"
        )
    error_index = payload
    # axes: (out_1(=1), out_2, next_state, in_1, in_2(=1), prev_state)
    axis_sizes = (1, out_size, n_states, in_size, 1, n_states)
    kernel = [Fraction(0)] * kernel_len
    for a_idx, symbol in enumerate(pfa.symbols):
        matrix = pfa.matrices[symbol]
        for w in range(payload):
            in_idx = a_idx * payload + w
            for prev in range(n_states):
                out_idx = w if prev == pfa.accept else error_index
                row = matrix[prev]
                for nxt in range(n_states):
                    if row[nxt]:
                        flat = row_major_index(axis_sizes, (0, out_idx, nxt, in_idx, 0, prev))
                        kernel[flat] = row[nxt]
    channel = ChannelSpec(
        input_alphabets=(Alphabet("SymbolPayload", in_size), Alphabet("NoInput", 1)),
        output_alphabets=(Alphabet("NoOutput", 1), Alphabet("PayloadOrError", out_size)),
        state_alphabet=Alphabet("S", n_states),
        kernel=tuple(kernel),
        initial_state=pfa.start,
    )
    meta = PfaChannelMeta(
        payload_size=payload,
        effective_k=math.log(payload),
        error_index=error_index,
        accept_observation=tuple(i == pfa.accept for i in range(n_states)),
    )
    return channel, meta


# ---------------------------------------------------------------------------
# rate bounds and gap constants
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CapacityBounds:
    lower: float | None
    upper: float | None
    lower_clamped: bool


def capacity_bounds(
    k_nats: float,
    kappa: float,
    tau1: Fraction | float | None = None,
    tau2: Fraction | float | None = None,
    sigma_size: int | None = None,
) -> CapacityBounds:
    """Achievable-rate bounds for the derived channel: tau1*K - kappa from a
    witness at threshold tau1; tau2*K + ln(sigma) under the caller-asserted
    emptiness hypothesis at tau2 (not verifiable by any algorithm)."""
    if kappa <= 0:
        raise ValueError(f"kappa must be positive, got {kappa}")
    lower = None
    clamped = False
    if tau1 is not None:
        lower = float(tau1) * k_nats - kappa
        if lower < 0:
            lower = 0.0
            clamped = True
    upper = None
    if tau2 is not None:
        if sigma_size is None or sigma_size < 1:
            raise ValueError("upper bound needs the input alphabet size")
        upper = float(tau2) * k_nats + math.log(sigma_size)
    return CapacityBounds(lower, upper, clamped)


@dataclass(frozen=True)
class GapConstants:
    k: float
    sigma_size: int
    delta1: float
    delta2: float
    c_l: float
    c_u: float
    gap_delta: float
    lower_threshold: float  # C_l + 2 Delta
    upper_threshold: float  # C_u - 2 Delta


def gap_constants(k_nats: float, sigma_size: int, delta1: float, delta2: float) -> GapConstants:
    """C_l = delta1 K + ln|Sigma|, C_u = (1-delta1) K - delta2,
    Delta = (C_u - C_l)/8, plus the two decision thresholds."""
    if not (0 <= delta1 < 0.5):
        raise ValueError(f"delta1 must lie in [0, 1/2), got {delta1}")
    if delta2 <= 0:
        raise ValueError(f"delta2 must be positive, got {delta2}")
    if sigma_size < 1:
        raise ValueError(f"sigma size must be >= 1, got {sigma_size}")
    c_l = delta1 * k_nats + math.log(sigma_size)
    c_u = (1 - delta1) * k_nats - delta2
    if c_u <= c_l:
        raise ValueError(
            f"C_u = {c_u} must exceed C_l = {c_l}; increase K beyond "
            f"{(math.log(sigma_size) + delta2) / (1 - 2 * delta1)}"
        )
    gap = (c_u - c_l) / 8
    return GapConstants(
        k=k_nats,
        sigma_size=sigma_size,
        delta1=delta1,
        delta2=delta2,
        c_l=c_l,
        c_u=c_u,
        gap_delta=gap,
        lower_threshold=c_l + 2 * gap,
        upper_threshold=c_u - 2 * gap,
    )


# ---------------------------------------------------------------------------
# two-phase communication scheme, Monte Carlo
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SimulationResult:
    mean_rate: float  # nats per channel use
    std_error: float
    trials: int
    horizon: int
    entered_fraction: float
    seed: int


def simulate_two_phase_scheme(
    pfa: PFA,
    prefix: Sequence[str],
    k_nats: float,
    horizon: int,
    trials: int,
    seed: int,
) -> SimulationResult:
    """Drive the state with `prefix`; if the accept state is entered during
    those uses, count K nats for every remaining use of the horizon.  Trials
    use per-trial derived seeds, so results are deterministic in `seed`."""
    prefix = tuple(prefix)
    if horizon < len(prefix):
        raise ValueError(f"horizon {horizon} shorter than prefix {len(prefix)}")
    if trials < 1:
        raise ValueError("need at least one trial")
    for symbol in prefix:
        if symbol not in pfa.matrices:
            raise ValueError(f"unknown input symbol {symbol!r}")
    # float cumulative rows, converted once
    cumulative: dict[str, list[list[float]]] = {}
    for symbol in set(prefix):
        rows = []
        for row in pfa.matrices[symbol]:
            acc, cum = 0.0, []
            for p in row:
                acc += float(p)
                cum.append(acc)
            rows.append(cum)
        cumulative[symbol] = rows

    total = 0.0
    total_sq = 0.0
    entered = 0
    for trial in range(trials):
        rng = random.Random(f"{seed}:{trial}")
        state = pfa.start
        enter_time = None
        for t, symbol in enumerate(prefix, start=1):
            if state == pfa.accept:
                break
            r = rng.random()
            cum = cumulative[symbol][state]
            for j, threshold in enumerate(cum):
                if r < threshold:
                    state = j
                    break
            else:
                state = len(cum) - 1
            if state == pfa.accept:
                enter_time = t
                break
        if enter_time is not None:
            entered += 1
            rate = k_nats * (horizon - enter_time) / horizon
        else:
            rate = 0.0
        total += rate
        total_sq += rate * rate
    mean = total / trials
    variance = max(0.0, total_sq / trials - mean * mean)
    std_error = math.sqrt(variance / trials)
    return SimulationResult(mean, std_error, trials, horizon, entered / trials, seed)


# ---------------------------------------------------------------------------
# file format
# ---------------------------------------------------------------------------


def pfa_to_json(pfa: PFA) -> str:
    doc = {
        "states": pfa.n_states,
        "start": pfa.start,
        "accept": pfa.accept,
        "sigma": list(pfa.symbols),
        "matrices": {
            symbol: [[format_ratio(x) for x in row] for row in pfa.matrices[symbol]]
            for symbol in pfa.symbols
        },
    }
    return json.dumps(doc, indent=2)


def pfa_from_json(text: str) -> PFA:
    doc = json.loads(text)
    symbols = tuple(str(s) for s in doc["sigma"])
    matrices = {
        symbol: tuple(
            tuple(parse_ratio(x) for x in row) for row in doc["matrices"][symbol]
        )
        for symbol in symbols
    }
    return PFA(
        n_states=int(doc["states"]),
        symbols=symbols,
        matrices=matrices,
        start=int(doc["start"]),
        accept=int(doc["accept"]),
    )
