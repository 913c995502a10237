"""Shared builders and independent oracles for the test suite.

Oracles here deliberately avoid the library's own computation paths: the
conditional-MI oracle works from the definition sum, the PFA oracle multiplies
dense matrices, and channel capacities come from closed forms.
"""

import math
import random
from fractions import Fraction

from flcap.prob_core import Alphabet, Distribution, ChannelSpec, channel_from_flat, marginalize
from flcap.pfa_channels import PFA


def dist(sizes, probs, names=None):
    alphabets = tuple(
        Alphabet(names[i] if names else f"X{i+1}", s) for i, s in enumerate(sizes)
    )
    return Distribution(alphabets, tuple(Fraction(p) for p in probs))


def random_rational_dist(rng: random.Random, size: int, max_num: int = 50) -> tuple[Fraction, ...]:
    weights = [rng.randint(0, max_num) for _ in range(size)]
    if sum(weights) == 0:
        weights[rng.randrange(size)] = 1
    total = sum(weights)
    return tuple(Fraction(w, total) for w in weights)


def l1(p, q) -> Fraction:
    return sum((abs(a - b) for a, b in zip(p, q)), Fraction(0))


def shannon_entropy(probs) -> float:
    return -sum(float(p) * math.log(float(p)) for p in probs if p)


# --- channels -------------------------------------------------------------


def bsc_channel(p) -> ChannelSpec:
    p = Fraction(p)
    return channel_from_flat([2, 1], [1, 2], 1, [1 - p, p, p, 1 - p])


def bec_channel(e) -> ChannelSpec:
    """Binary input, outputs (0, 1, erasure)."""
    e = Fraction(e)
    z = Fraction(0)
    # flat order: (y, x) row-major with |Y|=3, |X|=2
    flat = [1 - e, z, z, 1 - e, e, e]
    return channel_from_flat([2, 1], [1, 3], 1, flat)


def useless_channel(out_probs) -> ChannelSpec:
    """Binary-input channel whose output law ignores the input."""
    out_probs = [Fraction(p) for p in out_probs]
    flat = []
    for p in out_probs:
        flat.extend([p, p])
    return channel_from_flat([2, 1], [1, len(out_probs)], 1, flat)


def noiseless_binary_channel(flip: bool = False) -> ChannelSpec:
    one, z = Fraction(1), Fraction(0)
    if flip:
        flat = [z, one, one, z]
    else:
        flat = [one, z, z, one]
    return channel_from_flat([2, 1], [1, 2], 1, flat)


def bsc_capacity(p: float) -> float:
    """ln 2 - h(p) nats."""
    if p in (0.0, 1.0):
        return math.log(2)
    return math.log(2) + p * math.log(p) + (1 - p) * math.log(1 - p)


# --- conditional MI from the definition ------------------------------------


def cmi_direct(d: Distribution, u, y, z) -> float:
    """sum p(u,y,z) ln[ p(u,y,z) p(z) / (p(u,z) p(y,z)) ], exact marginals."""
    u, y, z = tuple(u), tuple(y), tuple(z)
    uyz = tuple(sorted(u + y + z))
    joint = marginalize(d, uyz)
    pos = {coord: k for k, coord in enumerate(uyz)}

    def sub(coords, assignment):
        return tuple(assignment[pos[c]] for c in sorted(coords))

    m_uz = marginalize(joint, tuple(pos[c] for c in sorted(u + z)))
    m_yz = marginalize(joint, tuple(pos[c] for c in sorted(y + z)))
    m_z = marginalize(joint, tuple(pos[c] for c in sorted(z)))

    from flcap.prob_core import enumerate_assignments

    total = 0.0
    for assignment in enumerate_assignments(joint.sizes):
        p = joint.prob(assignment)
        if not p:
            continue
        p_uz = m_uz.prob(sub(u + z, assignment))
        p_yz = m_yz.prob(sub(y + z, assignment))
        p_z = m_z.prob(sub(z, assignment))
        total += float(p) * math.log(float(p * p_z) / float(p_uz * p_yz))
    return total


# --- PFA helpers ------------------------------------------------------------


def two_state_pfa() -> PFA:
    f = Fraction
    return PFA(2, ("a",), {"a": ((f(1, 2), f(1, 2)), (f(0), f(1)))}, start=0, accept=1)


def contains_ab_pfa() -> PFA:
    one, z = Fraction(1), Fraction(0)
    return PFA(
        3,
        ("a", "b"),
        {
            "a": ((z, one, z), (z, one, z), (z, z, one)),
            "b": ((one, z, z), (z, z, one), (z, z, one)),
        },
        start=0,
        accept=2,
    )


def random_pfa(rng: random.Random, n_states: int = 3, n_symbols: int = 2) -> PFA:
    """Random rational row-stochastic PFA with absorbing accept state n-1."""
    accept = n_states - 1
    symbols = tuple(chr(ord("a") + k) for k in range(n_symbols))
    matrices = {}
    for symbol in symbols:
        rows = []
        for i in range(n_states):
            if i == accept:
                rows.append(tuple(Fraction(1 if j == accept else 0) for j in range(n_states)))
            else:
                rows.append(random_rational_dist(rng, n_states, max_num=6))
        matrices[symbol] = tuple(rows)
    return PFA(n_states, symbols, matrices, start=0, accept=accept)


def matrix_power_acceptance(pfa: PFA, string) -> Fraction:
    """Independent oracle: dense matrix product, then start row of the result."""
    n = pfa.n_states
    product = [[Fraction(1 if i == j else 0) for j in range(n)] for i in range(n)]
    for symbol in string:
        m = pfa.matrices[symbol]
        product = [
            [sum((product[i][k] * m[k][j] for k in range(n)), Fraction(0)) for j in range(n)]
            for i in range(n)
        ]
    return product[pfa.start][pfa.accept]
