"""Command-line surface.

Subcommands: ``validate``, ``capacity``, ``region``, ``pfa``.  Values print in
nats with bits echoed; exact rationals print as "num/den" plus a decimal.
Every successful run can emit a versioned JSON report whose results payload is
bit-exact reproducible for identical inputs and seed.

Exit codes
    0  success
    1  parse error (FLC, channel, or PFA file)
    2  dimension mismatch (and argparse usage errors, per convention)
    3  resource cap exceeded (grid, candidate enumeration, or search)
    4  region command on a representation without exactly 2 rate symbols
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
from fractions import Fraction

from flcap import __version__
from flcap.ratio import format_ratio, parse_ratio
from flcap.prob_core import ChannelSpec, channel_from_json, channel_to_json, validate_channel
from flcap.flc_model import (
    FLCParseError,
    FLCSpec,
    FLCValidationError,
    parse_flc,
    validate_against_channel,
)
from flcap.feasibility_grid import GridCapError
from flcap.capacity_engine import (
    CapacityEstimate,
    RateCountError,
    RegionResult,
    approximate_capacity,
    region_2user,
)
from flcap.pfa_channels import (
    PFA,
    SearchCapError,
    acceptance_profile,
    bounded_emptiness_search,
    build_channel_from_pfa,
    capacity_bounds,
    gap_constants,
    pfa_from_json,
    simulate_two_phase_scheme,
)

EXIT_OK = 0
EXIT_PARSE = 1
EXIT_MISMATCH = 2
EXIT_CAP = 3
EXIT_RATE_COUNT = 4

DEFAULT_SEED = 0
SCHEMA_VERSION = 1


def _nats_bits(value: float) -> str:
    return f"{value:.6f} nats ({value / math.log(2):.6f} bits)"


def _ratio_line(value: Fraction) -> str:
    return f"{format_ratio(value)} = {float(value):.6g}"


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        h.update(fh.read())
    return h.hexdigest()


def _write_report(args, inputs: list[str], results: dict, started: float) -> None:
    out_path = getattr(args, "out", None)
    if not out_path:
        return
    report = {
        "schema": SCHEMA_VERSION,
        "command": sys.argv[1:] if args.echo_argv else args.command_echo,
        "inputs": {path: _sha256(path) for path in inputs},
        "seed": getattr(args, "seed", DEFAULT_SEED),
        "results": results,
        "wall_time_s": time.perf_counter() - started,
    }
    with open(out_path, "w") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    print(f"report written to {out_path}")


def _load_flc(path: str) -> FLCSpec:
    with open(path) as fh:
        return parse_flc(fh.read())


def _load_channel(path: str) -> ChannelSpec:
    with open(path) as fh:
        text = fh.read()
    try:
        channel = channel_from_json(text)
    except json.JSONDecodeError as exc:
        raise FLCParseError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    except (KeyError, TypeError) as exc:
        raise FLCParseError(f"missing or malformed channel field: {exc}") from None
    problem = validate_channel(channel)
    if problem:
        raise FLCParseError(f"invalid channel: {problem}")
    return channel


def _load_pfa(path: str) -> PFA:
    with open(path) as fh:
        text = fh.read()
    try:
        return pfa_from_json(text)
    except json.JSONDecodeError as exc:
        raise FLCParseError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    except (KeyError, TypeError, ValueError) as exc:
        raise FLCParseError(f"invalid PFA file: {exc}") from None


def _split_symbols(text: str) -> list[str]:
    if "," in text:
        return [s for s in text.split(",") if s]
    return list(text)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_validate(args) -> int:
    started = time.perf_counter()
    flc = _load_flc(args.flc)
    channel = _load_channel(args.channel)
    mismatch = validate_against_channel(flc, channel)
    if mismatch:
        print(f"mismatch: {mismatch}", file=sys.stderr)
        return EXIT_MISMATCH
    print(
        f"ok: {len(flc.representation)} inequalities, {len(flc.constraints)} constraints, "
        f"{len(flc.alphabets)} alphabets, {flc.n_users} users"
    )
    _write_report(
        args,
        [args.flc, args.channel],
        {
            "valid": True,
            "n_inequalities": len(flc.representation),
            "n_constraints": len(flc.constraints),
            "n_alphabets": len(flc.alphabets),
        },
        started,
    )
    return EXIT_OK


def _estimate_results(estimate: CapacityEstimate) -> dict:
    return {
        "beta_nats": estimate.beta,
        "beta_bits": estimate.beta / math.log(2),
        "epsilon_nats": estimate.epsilon,
        "interval_nats": list(estimate.interval),
        "delta_used": format_ratio(estimate.delta_used),
        "grid_size": estimate.grid_size,
        "mode": estimate.mode,
        "unknown_fraction": estimate.unknown_fraction,
        "empty_feasible_set": estimate.empty_feasible_set,
        "error_breakdown": {
            "grid": estimate.error_breakdown.grid,
            "numeric": estimate.error_breakdown.numeric,
            "eta_slack": estimate.error_breakdown.eta_slack,
        },
    }


def cmd_capacity(args) -> int:
    started = time.perf_counter()
    flc = _load_flc(args.flc)
    channel = _load_channel(args.channel)
    mismatch = validate_against_channel(flc, channel)
    if mismatch:
        print(f"mismatch: {mismatch}", file=sys.stderr)
        return EXIT_MISMATCH
    estimate = approximate_capacity(
        flc,
        channel,
        args.epsilon,
        mode=args.mode,
        strict_unknowns=args.strict_unknowns,
    )
    print(f"beta = {_nats_bits(estimate.beta)}")
    print(f"epsilon = {estimate.epsilon:.6f} nats; interval [{estimate.interval[0]:.6f}, {estimate.interval[1]:.6f}] nats")
    bd = estimate.error_breakdown
    print(f"error budget: grid {bd.grid:.6g}, numeric {bd.numeric:.6g}, eta_slack {bd.eta_slack:.6g}")
    print(
        f"grid: delta={format_ratio(estimate.delta_used)}, size={estimate.grid_size}, "
        f"mode={estimate.mode}, unknown_fraction={estimate.unknown_fraction:.6g}"
    )
    if estimate.empty_feasible_set:
        print("warning: empty feasible set; beta reported as 0")
    _write_report(args, [args.flc, args.channel], _estimate_results(estimate), started)
    return EXIT_OK


def _region_results(region: RegionResult) -> dict:
    return {
        "rate_pairs": [list(p) for p in region.rate_pairs],
        "mode": region.mode,
        "grid_m": region.m,
        "n_members": len(region.members),
        "max_sum_rate_nats": region.max_sum_rate(),
        "support_fan": [
            {"dx": dx, "dy": dy, "support": s} for dx, dy, s in region.support
        ],
        "polygons": [
            {
                "grid_index": member.index,
                "unbounded": member.unbounded,
                "vertices": [[v.r1, v.r2] for v in member.vertices],
            }
            for member in region.members
        ],
    }


def cmd_region(args) -> int:
    started = time.perf_counter()
    flc = _load_flc(args.flc)
    channel = _load_channel(args.channel)
    mismatch = validate_against_channel(flc, channel)
    if mismatch:
        print(f"mismatch: {mismatch}", file=sys.stderr)
        return EXIT_MISMATCH
    region = region_2user(flc, channel, args.grid_m, mode=args.mode)
    print(
        f"region over rates {region.rate_pairs[0]} and {region.rate_pairs[1]}: "
        f"{len(region.members)} member polygons at m={region.m} ({region.mode} mode)"
    )
    print(f"max sum-rate = {_nats_bits(region.max_sum_rate())}")
    unbounded = sum(1 for member in region.members if member.unbounded)
    if unbounded:
        print(f"warning: {unbounded} member polygons unbounded (no binding inequality)")
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write("R1_nats,R2_nats,grid_index\n")
            for member in region.members:
                for v in member.vertices:
                    fh.write(f"{v.r1!r},{v.r2!r},{member.index}\n")
        print(f"point cloud written to {args.csv}")
    _write_report(args, [args.flc, args.channel], _region_results(region), started)
    return EXIT_OK


def cmd_pfa(args) -> int:
    started = time.perf_counter()
    pfa = _load_pfa(args.pfa)
    results: dict
    if args.pfa_command == "accept":
        profile = acceptance_profile(pfa, _split_symbols(args.string))
        print(f"acceptance probability: {_ratio_line(profile.prob_in_accept)}")
        print("per-prefix:", ", ".join(format_ratio(p) for p in profile.per_prefix))
        results = {
            "string": list(profile.string),
            "prob": format_ratio(profile.prob_in_accept),
            "per_prefix": [format_ratio(p) for p in profile.per_prefix],
        }
    elif args.pfa_command == "search":
        outcome = bounded_emptiness_search(pfa, parse_ratio(args.tau), args.max_len)
        if outcome.found:
            print(
                f"witness {''.join(outcome.witness)!r} with probability "
                f"{_ratio_line(outcome.witness_prob)} > tau = {_ratio_line(outcome.tau)}"
            )
        else:
            print(
                f"no witness up to length {outcome.max_len}; best {''.join(outcome.best_string)!r} "
                f"with probability {_ratio_line(outcome.best_prob)} (proves nothing)"
            )
        results = {
            "found": outcome.found,
            "tau": format_ratio(outcome.tau),
            "max_len": outcome.max_len,
            "witness": list(outcome.witness) if outcome.witness is not None else None,
            "witness_prob": format_ratio(outcome.witness_prob) if outcome.witness_prob is not None else None,
            "best_string": list(outcome.best_string),
            "best_prob": format_ratio(outcome.best_prob),
        }
    elif args.pfa_command == "channel":
        channel, meta = build_channel_from_pfa(pfa, args.k)
        print(
            f"channel: {channel.state_alphabet.size} states, payload {meta.payload_size} "
            f"(effective K = {_nats_bits(meta.effective_k)}), error symbol index {meta.error_index}"
        )
        if args.channel_out:
            with open(args.channel_out, "w") as fh:
                fh.write(channel_to_json(channel))
            print(f"channel written to {args.channel_out}")
        results = {
            "payload_size": meta.payload_size,
            "effective_k_nats": meta.effective_k,
            "error_index": meta.error_index,
            "n_states": channel.state_alphabet.size,
            "accept_observation": list(meta.accept_observation),
        }
    elif args.pfa_command == "bounds":
        constants = gap_constants(args.k, args.sigma, args.delta1, args.delta2)
        print(f"C_l = {_nats_bits(constants.c_l)}")
        print(f"C_u = {_nats_bits(constants.c_u)}")
        print(f"Delta = {_nats_bits(constants.gap_delta)}")
        print(
            f"decision thresholds: below {constants.lower_threshold:.6f} nats / "
            f"above {constants.upper_threshold:.6f} nats"
        )
        results = {
            "c_l_nats": constants.c_l,
            "c_u_nats": constants.c_u,
            "delta_nats": constants.gap_delta,
            "lower_threshold_nats": constants.lower_threshold,
            "upper_threshold_nats": constants.upper_threshold,
        }
        if args.tau1 is not None or args.tau2 is not None:
            rate = capacity_bounds(
                args.k,
                args.kappa,
                tau1=parse_ratio(args.tau1) if args.tau1 is not None else None,
                tau2=parse_ratio(args.tau2) if args.tau2 is not None else None,
                sigma_size=args.sigma,
            )
            if rate.lower is not None:
                suffix = " (clamped to 0)" if rate.lower_clamped else ""
                print(f"achievable rate > {_nats_bits(rate.lower)}{suffix}")
                results["lower_bound_nats"] = rate.lower
                results["lower_clamped"] = rate.lower_clamped
            if rate.upper is not None:
                print(f"rate upper bound (under asserted emptiness): {_nats_bits(rate.upper)}")
                results["upper_bound_nats"] = rate.upper
    else:  # simulate
        sim = simulate_two_phase_scheme(
            pfa,
            _split_symbols(args.prefix),
            args.k,
            args.horizon,
            args.trials,
            args.seed,
        )
        print(f"empirical rate = {_nats_bits(sim.mean_rate)} +- {sim.std_error:.6f} (1 s.e.)")
        print(f"entered good state in {sim.entered_fraction:.4f} of {sim.trials} trials")
        results = {
            "mean_rate_nats": sim.mean_rate,
            "std_error": sim.std_error,
            "trials": sim.trials,
            "horizon": sim.horizon,
            "entered_fraction": sim.entered_fraction,
            "seed": sim.seed,
        }
    _write_report(args, [args.pfa], results, started)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flcap",
        description="Grid-based capacity approximation for inequality/constraint "
        "channel characterizations, plus PFA-derived channel analysis.",
    )
    parser.add_argument("--version", action="version", version=f"flcap {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", help="write a JSON run report to this path")
        p.add_argument(
            "--seed",
            type=int,
            default=DEFAULT_SEED,
            help=f"seed for any Monte-Carlo work (default {DEFAULT_SEED})",
        )

    p_validate = sub.add_parser("validate", help="parse an FLC file and check it against a channel")
    p_validate.add_argument("flc")
    p_validate.add_argument("channel")
    common(p_validate)
    p_validate.set_defaults(handler=cmd_validate)

    p_capacity = sub.add_parser("capacity", help="capacity estimate beta with |C - beta| <= epsilon")
    p_capacity.add_argument("flc")
    p_capacity.add_argument("channel")
    p_capacity.add_argument("--epsilon", type=float, required=True, help="target accuracy in nats")
    p_capacity.add_argument(
        "--mode", choices=("auto", "structured", "generic"), default="auto",
        help="grid over the factorization plan's free blocks (structured) or the joint simplex (generic)",
    )
    p_capacity.add_argument(
        "--strict-unknowns", action="store_true",
        help="exclude Unknown-verdict grid members (certified lower bound in generic mode)",
    )
    common(p_capacity)
    p_capacity.set_defaults(handler=cmd_capacity)

    p_region = sub.add_parser("region", help="2-user rate region polygons and support fan")
    p_region.add_argument("flc")
    p_region.add_argument("channel")
    p_region.add_argument("--grid-m", type=int, default=20, help="lattice denominator (default 20)")
    p_region.add_argument(
        "--mode", choices=("auto", "structured", "generic"), default="auto"
    )
    p_region.add_argument("--csv", help="write the vertex point cloud as CSV (columns R1_nats,R2_nats,grid_index)")
    common(p_region)
    p_region.set_defaults(handler=cmd_region)

    p_pfa = sub.add_parser("pfa", help="probabilistic finite automaton analysis")
    p_pfa.add_argument("pfa", help="PFA JSON file")
    pfa_sub = p_pfa.add_subparsers(dest="pfa_command", required=True)

    p_accept = pfa_sub.add_parser("accept", help="exact acceptance probability of a string")
    p_accept.add_argument("--string", required=True, help="input string (chars, or comma-separated symbols)")

    p_search = pfa_sub.add_parser("search", help="bounded emptiness search above a threshold")
    p_search.add_argument("--tau", required=True, help='threshold as a rational, e.g. "3/4"')
    p_search.add_argument("--max-len", type=int, required=True)

    p_channel = pfa_sub.add_parser("channel", help="construct the derived state channel")
    p_channel.add_argument("--k", type=float, required=True, help="payload rate in nats per use")
    p_channel.add_argument("--channel-out", help="write the channel JSON to this path")

    p_bounds = pfa_sub.add_parser("bounds", help="gap constants and rate bounds")
    p_bounds.add_argument("--k", type=float, required=True, help="payload rate in nats per use")
    p_bounds.add_argument("--sigma", type=int, required=True, help="PFA input alphabet size")
    p_bounds.add_argument("--delta1", type=float, required=True)
    p_bounds.add_argument("--delta2", type=float, required=True)
    p_bounds.add_argument("--tau1", help="witness threshold (rational) for the achievability bound")
    p_bounds.add_argument("--tau2", help="asserted-emptiness threshold (rational) for the converse bound")
    p_bounds.add_argument("--kappa", type=float, default=0.01)

    p_simulate = pfa_sub.add_parser("simulate", help="Monte-Carlo rate of the two-phase scheme")
    p_simulate.add_argument("--prefix", required=True, help="driving string (chars, or comma-separated symbols)")
    p_simulate.add_argument("--k", type=float, required=True, help="payload rate in nats per use")
    p_simulate.add_argument("--horizon", type=int, default=1000)
    p_simulate.add_argument("--trials", type=int, default=10000)

    common(p_pfa)
    p_pfa.set_defaults(handler=cmd_pfa)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args.echo_argv = argv is None
    args.command_echo = list(argv) if argv is not None else []
    if args.command == "capacity" and args.epsilon <= 0:
        parser.error("--epsilon must be positive")
    if args.command == "region" and args.grid_m < 1:
        parser.error("--grid-m must be >= 1")
    try:
        return args.handler(args)
    except FLCParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except FLCValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (GridCapError, SearchCapError) as exc:
        print(f"resource cap: {exc}", file=sys.stderr)
        return EXIT_CAP
    except RateCountError as exc:
        print(f"region error: {exc}", file=sys.stderr)
        return EXIT_RATE_COUNT
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
