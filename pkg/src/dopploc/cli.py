"""Command-line interface: simulate, solve, montecarlo, seed-pack.

Every command is deterministic given --seed, writes primary outputs without
timestamps, and drops a ``<output>.manifest.json`` side file recording the
command, configuration digest, and input/output digests. Exit codes:

    0  success
    2  usage or file-format error
    3  physics error (coincident points, bad dimensions, degenerate orbit)
    4  no candidates survived filtering / Monte Carlo failure fraction > 50%
    5  start-pack problem (missing, corrupt, or wrong family)
    6  seeded root count disagrees with the expected family count
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__, fileio
from .estimator import solve_doppler
from .exceptions import (
    CoincidentPointsError,
    CorruptPackError,
    DegenerateDrawError,
    DegenerateOrbitError,
    DimensionMismatchError,
    DopplocError,
    FamilyMismatchError,
    FormatError,
    HyperbolicOrbitError,
    InvalidScaleError,
    NoCandidatesError,
    NoProgressError,
    PackMissingError,
    ZeroFrequencyError,
)
from .model import DopplerSystem
from .monodromy import EXPECTED_ROOT_COUNTS, build_pack
from .scenarios import NoiseConfig, run_monte_carlo, simulate_measurements

__all__ = ["main"]

_USAGE_EXIT = 2
_PHYSICS_EXIT = 3
_EMPTY_EXIT = 4
_PACK_EXIT = 5
_COUNT_EXIT = 6

_PHYSICS_ERRORS = (
    CoincidentPointsError,
    ZeroFrequencyError,
    DimensionMismatchError,
    InvalidScaleError,
    DegenerateDrawError,
    DegenerateOrbitError,
    HyperbolicOrbitError,
)
_PACK_ERRORS = (PackMissingError, CorruptPackError, FamilyMismatchError)


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return value


def _sigma(entries) -> float | dict:
    """Fold repeated ``--sigma-x [GROUP=]VALUE`` flags into a float or map."""
    if not entries:
        return 0.0
    plain = [e for e in entries if "=" not in e]
    grouped = [e for e in entries if "=" in e]
    if plain and grouped:
        raise FormatError("mix of plain and GROUP=VALUE sigma flags")
    if plain:
        if len(plain) > 1:
            raise FormatError("plain sigma flag given more than once")
        try:
            return float(plain[0])
        except ValueError:
            raise FormatError(f"sigma value {plain[0]!r} is not a number") from None
    out = {}
    for entry in grouped:
        group, _, value = entry.partition("=")
        try:
            out[group.strip()] = float(value)
        except ValueError:
            raise FormatError(f"sigma value {value!r} is not a number") from None
    return out


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    sub.add_argument("--json", action="store_true", help="print a machine-readable JSON summary")
    sub.add_argument(
        "--threads",
        type=_positive_int,
        default=1,
        help="worker count; the tracker is batch-vectorized, so results are identical for any value",
    )


def _add_noise_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument(
        "--sigma-r",
        action="append",
        default=[],
        metavar="[GROUP=]METERS",
        help="receiver position noise; repeat with GROUP=VALUE for per-group sigmas",
    )
    sub.add_argument(
        "--sigma-v",
        action="append",
        default=[],
        metavar="[GROUP=]M_PER_S",
        help="receiver velocity noise; repeat with GROUP=VALUE for per-group sigmas",
    )
    sub.add_argument("--sigma-f", type=float, default=0.0, metavar="HZ", help="frequency noise")


def _emit(args, human: str, payload: dict) -> None:
    if args.json:
        print(json.dumps(payload, sort_keys=True))
    else:
        print(human)


def _noise_from_args(args) -> NoiseConfig | None:
    sigma_r = _sigma(args.sigma_r)
    sigma_v = _sigma(args.sigma_v)
    if not args.sigma_r and not args.sigma_v and args.sigma_f == 0.0:
        return None
    return NoiseConfig(sigma_r=sigma_r, sigma_v=sigma_v, sigma_f=args.sigma_f, rng_seed=args.seed)


def _config_dict(args) -> dict:
    skip = {"func", "json"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


# ---------------------------------------------------------------------------
# subcommands

def _cmd_simulate(args) -> int:
    scenario = fileio.load_scenario(args.scenario)
    noise = _noise_from_args(args)
    rng = np.random.default_rng(args.seed)
    _, measured = simulate_measurements(scenario, rng, noise)
    measurement = fileio.MeasurementSet(
        receivers=measured,
        c=scenario.c,
        known_frequency=scenario.truth.f if scenario.known_frequency else None,
        medium=scenario.medium,
    )
    fileio.save_measurement(measurement, args.out)
    fileio.write_manifest(
        args.out, "simulate", args.seed, _config_dict(args), inputs=[args.scenario], outputs=[args.out]
    )
    _emit(
        args,
        f"wrote {args.out}: {len(measured)} receivers" + (" (noisy)" if noise else " (noise-free)"),
        {
            "command": "simulate",
            "measurement": str(args.out),
            "receivers": len(measured),
            "noisy": noise is not None,
            "seed": args.seed,
        },
    )
    return 0


def _reorder_extra(receivers, n_obs: int, extra_index: int | None):
    """Place the disambiguating receiver right after the square block."""
    if extra_index is None:
        return receivers
    if not 0 <= extra_index < len(receivers):
        raise DimensionMismatchError(
            f"--extra-receiver {extra_index} out of range for {len(receivers)} receivers"
        )
    rest = [rx for i, rx in enumerate(receivers) if i != extra_index]
    if len(rest) < n_obs:
        raise DimensionMismatchError("not enough receivers left for the square system")
    return rest[:n_obs] + [receivers[extra_index]] + rest[n_obs:]


def _cmd_solve(args) -> int:
    measurement = fileio.load_measurement(args.measurement)
    pack = fileio.load_pack(args.pack) if args.pack else None
    n_obs = 6 if measurement.known_frequency is not None else 7
    receivers = _reorder_extra(measurement.receivers, n_obs, args.extra_receiver)
    sigmas = None
    if args.sigma_r or args.sigma_v or args.sigma_f:
        sr, sv = _sigma(args.sigma_r), _sigma(args.sigma_v)
        if isinstance(sr, dict) or isinstance(sv, dict):
            raise FormatError("solve takes plain --sigma-r/--sigma-v values, not per-group maps")
        sigmas = (sr, sv, args.sigma_f)

    result = solve_doppler(
        receivers,
        measurement.c,
        known_frequency=measurement.known_frequency,
        pack=pack,
        noise_sigmas=sigmas,
    )
    record = fileio.SolutionRecord.from_result(result, measurement.c, measurement.known_frequency)
    fileio.save_solution(record, args.out)
    inputs = [args.measurement] + ([args.pack] if args.pack else [])
    fileio.write_manifest(args.out, "solve", args.seed, _config_dict(args), inputs=inputs, outputs=[args.out])

    best = result.best.state
    stats = record.stats
    _emit(
        args,
        (
            f"wrote {args.out}: {len(result.candidates)} candidate(s) from "
            f"{stats['tracked']} tracked paths ({stats['succeeded']} finished, "
            f"{stats['real']} real, {stats['sign_test']} passed the sign test)\n"
            f"best: r = {best.r[0]:.6g} {best.r[1]:.6g} {best.r[2]:.6g} m, "
            f"v = {best.v[0]:.6g} {best.v[1]:.6g} {best.v[2]:.6g} m/s, f = {best.f:.10g} Hz"
        ),
        {
            "command": "solve",
            "solution": str(args.out),
            "candidates": len(result.candidates),
            "best": {"r": list(best.r), "v": list(best.v), "f": best.f},
            "stats": stats,
            "paths_tracked": result.paths_tracked,
        },
    )
    return 0


def _cmd_montecarlo(args) -> int:
    scenario = fileio.load_scenario(args.scenario)
    noise = _noise_from_args(args) or NoiseConfig()
    pack = fileio.load_pack(args.pack) if args.pack else None
    report = run_monte_carlo(
        scenario,
        noise,
        args.trials,
        pack=pack,
        rng_seed=args.seed,
        gate_factor=args.gate_factor,
    )
    fileio.save_report(report, args.out)
    inputs = [args.scenario] + ([args.pack] if args.pack else [])
    fileio.write_manifest(args.out, "montecarlo", args.seed, _config_dict(args), inputs=inputs, outputs=[args.out])

    fraction = report.failures / report.trials
    summary_bits = ", ".join(
        f"{metric} median {vals['median']:.4g}" for metric, vals in sorted(report.summary.items())
        if not metric.startswith("element_")
    )
    _emit(
        args,
        f"wrote {args.out}: {report.trials} trials, {report.failures} failures ({fraction:.0%}); {summary_bits}",
        {
            "command": "montecarlo",
            "report": str(args.out),
            "trials": report.trials,
            "failures": report.failures,
            "summary": report.summary,
        },
    )
    return _EMPTY_EXIT if fraction > 0.5 else 0


def _cmd_seed_pack(args) -> int:
    known = args.known_f
    stationary = args.stationary
    halve = args.halve if args.halve is not None else stationary
    if halve and not stationary:
        raise FormatError("--halve applies only to stationary families")
    system = DopplerSystem(n_obs=6 if known else 7, known_frequency=known, stationary=stationary)
    expected_full = EXPECTED_ROOT_COUNTS[system.family_key]
    expected = expected_full // 2 if halve else expected_full

    pack = build_pack(system, rng_seed=args.seed, halve=halve)
    count_ok = pack.root_count == expected
    if not count_ok and not args.allow_count_mismatch:
        print(
            f"dopploc seed-pack: stabilized at {pack.root_count} solutions, expected {expected}",
            file=sys.stderr,
        )
        return _COUNT_EXIT

    fileio.save_pack(pack, args.out)
    fileio.write_manifest(args.out, "seed-pack", args.seed, _config_dict(args), outputs=[args.out])
    family = {"n_obs": pack.n_obs, "known_frequency": known, "stationary": stationary, "halved": halve}
    _emit(
        args,
        f"wrote {args.out}: {pack.root_count} start solutions"
        + ("" if count_ok else f" (expected {expected}; kept by --allow-count-mismatch)"),
        {
            "command": "seed-pack",
            "pack": str(args.out),
            "family": family,
            "root_count": pack.root_count,
            "expected": expected,
        },
    )
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dopploc",
        description="Source position/velocity/frequency estimation from Doppler-shifted measurements.",
    )
    parser.add_argument("--version", action="version", version=f"dopploc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate measurements from a scenario file")
    p.add_argument("scenario", help="scenario file")
    p.add_argument("-o", "--out", required=True, help="measurement file to write")
    _add_noise_flags(p)
    _add_common(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("solve", help="estimate the source state from a measurement file")
    p.add_argument("measurement", help="measurement file")
    p.add_argument("-o", "--out", required=True, help="solution file to write")
    p.add_argument("--pack", help="start-pack file (default: the shipped pack for the family)")
    p.add_argument(
        "--extra-receiver",
        type=int,
        default=None,
        metavar="INDEX",
        help="receiver index (0-based, file order) to hold out as the disambiguator",
    )
    _add_noise_flags(p)
    _add_common(p)
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("montecarlo", help="noise-injection study against a scenario's truth")
    p.add_argument("scenario", help="scenario file")
    p.add_argument("-o", "--out", required=True, help="report file to write")
    p.add_argument("--trials", type=_positive_int, required=True, help="number of trials (>= 1)")
    p.add_argument("--gate-factor", type=float, default=10.0,
                   help="gross-error gate as a multiple of the success p95 (default 10)")
    p.add_argument("--pack", help="start-pack file (default: the shipped pack for the family)")
    _add_noise_flags(p)
    _add_common(p)
    p.set_defaults(func=_cmd_montecarlo)

    p = sub.add_parser("seed-pack", help="build and verify a start pack by monodromy")
    p.add_argument("-o", "--out", required=True, help="pack file to write")
    motion = p.add_mutually_exclusive_group(required=True)
    motion.add_argument("--moving", dest="stationary", action="store_false",
                        help="receivers may move (general family)")
    motion.add_argument("--stationary", dest="stationary", action="store_true",
                        help="all receivers at rest (symmetric family)")
    freq = p.add_mutually_exclusive_group(required=True)
    freq.add_argument("--known-f", dest="known_f", action="store_true",
                      help="transmit frequency known a priori (6 unknowns)")
    freq.add_argument("--unknown-f", dest="known_f", action="store_false",
                      help="transmit frequency estimated (7 unknowns)")
    halve = p.add_mutually_exclusive_group()
    halve.add_argument("--halve", dest="halve", action="store_true", default=None,
                       help="store one solution per velocity-sign pair (stationary only; default on)")
    halve.add_argument("--no-halve", dest="halve", action="store_false",
                       help="store the full solution set")
    p.add_argument("--allow-count-mismatch", action="store_true",
                   help="write the pack even when the stabilized count is unexpected")
    _add_common(p)
    p.set_defaults(func=_cmd_seed_pack)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FormatError as exc:
        print(f"dopploc {args.command}: {exc}", file=sys.stderr)
        return _USAGE_EXIT
    except _PHYSICS_ERRORS as exc:
        print(f"dopploc {args.command}: {exc}", file=sys.stderr)
        return _PHYSICS_EXIT
    except (NoCandidatesError,) as exc:
        print(f"dopploc {args.command}: {exc}", file=sys.stderr)
        return _EMPTY_EXIT
    except _PACK_ERRORS as exc:
        print(f"dopploc {args.command}: {exc}", file=sys.stderr)
        return _PACK_EXIT
    except NoProgressError as exc:
        print(f"dopploc {args.command}: {exc}", file=sys.stderr)
        return _COUNT_EXIT
    except DopplocError as exc:  # pragma: no cover - catch-all for new subclasses
        print(f"dopploc {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
