"""CLI entrypoint for channel generation, single solves and Monte-Carlo sweeps."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import List

from .bcd_driver import BcdOptions, BcdStatus, audit_constraints, run_bcd
from .channel_model import ChannelFileError, generate_channels, load_channel_file, save_channel_file
from .config import load_scenario_file
from .database import default_db_path, get_recent_runs, init_db, persist_sweep
from .feature_flags import get_feature_flag
from .phase_opt import PhaseOptions
from .settings import configure_logging, load_environment
from .sweep import load_sweep_spec, run_sweep, write_sweep_csv

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INFEASIBLE = 2

U64_MAX = 2**64 - 1


class _Parser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit code 1."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_ERROR)


def _u64(raw: str) -> int:
    try:
        value = int(raw)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not an integer: {raw!r}") from exc
    if not 0 <= value <= U64_MAX:
        raise argparse.ArgumentTypeError(f"seed must be in [0, 2^64), got {value}")
    return value


def _positive_int(raw: str) -> int:
    try:
        value = int(raw)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not an integer: {raw!r}") from exc
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {value}")
    return value


def _positive_float(raw: str) -> float:
    try:
        value = float(raw)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a number: {raw!r}") from exc
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {value}")
    return value


def cmd_gen_channels(args: argparse.Namespace) -> int:
    try:
        config = load_scenario_file(Path(args.config)).to_system_config()
        ch = generate_channels(config, args.seed)
        out = save_channel_file(Path(args.out), config, ch)
    except (OSError, ValueError) as exc:
        print(f"gen-channels failed: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(json.dumps({"out": str(out), "seed": args.seed, "M": config.M, "N": config.N}, indent=2))
    return EXIT_OK


def _solve_options(args: argparse.Namespace) -> BcdOptions:
    samples = args.sdr_samples or int(get_feature_flag("randomization_samples_default", 1000))
    return BcdOptions(
        max_outer=args.max_outer,
        tol_rate=args.tol,
        phase_opts=PhaseOptions(num_samples=samples, seed=args.sdr_seed),
    )


def cmd_solve(args: argparse.Namespace) -> int:
    try:
        config, ch = load_channel_file(Path(args.channels))
    except (OSError, ChannelFileError) as exc:
        print(f"solve failed: {exc}", file=sys.stderr)
        return EXIT_ERROR

    try:
        report = run_bcd(config, ch, _solve_options(args))
    except Exception as exc:
        print(f"solve failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR

    payload = report.to_dict()
    payload["audit"] = audit_constraints(config, ch, report)
    if args.json:
        out = Path(args.json)
        try:
            out.parent.mkdir(parents=True, exist_ok=True)
            out.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
        except OSError as exc:
            print(f"solve failed: {exc}", file=sys.stderr)
            return EXIT_ERROR
        print(f"status:     {report.status.value}")
        print(f"sum rate:   {report.sum_rate:.12g} nats")
        print(f"gamma_D:    {report.gamma_D:.12g}")
        print(f"gamma_C:    {report.gamma_C:.12g}")
        print(f"p_D, p_C:   {report.p_D:.12g}, {report.p_C:.12g} W")
        print(f"iterations: {report.iterations}")
        print(f"audit:      {payload['audit']['status']}")
        print(f"report:     {out}")
    else:
        print(json.dumps(payload, indent=2))

    if report.status is BcdStatus.INFEASIBLE:
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    try:
        spec = load_sweep_spec(Path(args.spec))
    except (OSError, ValueError) as exc:
        print(f"sweep failed: {exc}", file=sys.stderr)
        return EXIT_ERROR

    jobs = args.jobs or int(get_feature_flag("sweep_jobs_default", 1))
    result = run_sweep(spec, jobs=max(1, jobs))
    try:
        out = write_sweep_csv(result, Path(args.out))
    except OSError as exc:
        print(f"sweep failed: {exc}", file=sys.stderr)
        return EXIT_ERROR

    payload = {"out": str(out), **result.summary()}
    if args.db is not None:
        db_path = Path(args.db) if args.db else default_db_path()
        payload["run_id"] = persist_sweep(result, csv_path=out, path=db_path)
        payload["db"] = str(db_path)
    print(json.dumps(payload, indent=2))
    return EXIT_OK


def cmd_show_runs(args: argparse.Namespace) -> int:
    db_path = Path(args.db) if args.db else None
    init_db(db_path)
    runs = get_recent_runs(limit=args.limit, path=db_path)
    print(json.dumps([r.model_dump() for r in runs], indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ris-d2d")
    subparsers = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    gen_parser = subparsers.add_parser("gen-channels", help="Draw one channel realization and write it as JSON")
    gen_parser.add_argument("--config", required=True, help="Scenario JSON file")
    gen_parser.add_argument("--seed", required=True, type=_u64, help="Unsigned 64-bit RNG seed")
    gen_parser.add_argument("--out", required=True, help="Output channel file")
    gen_parser.set_defaults(func=cmd_gen_channels)

    solve_parser = subparsers.add_parser("solve", help="Run block coordinate descent on one channel file")
    solve_parser.add_argument("--channels", required=True, help="Channel file written by gen-channels")
    solve_parser.add_argument("--max-outer", type=_positive_int, default=30)
    solve_parser.add_argument("--tol", type=_positive_float, default=1e-4, help="Sum-rate tolerance in nats")
    solve_parser.add_argument("--sdr-samples", type=_positive_int, default=None, help="Gaussian randomization samples")
    solve_parser.add_argument("--sdr-seed", type=_u64, default=0, help="Seed of the randomization stream")
    solve_parser.add_argument("--json", default=None, help="Write the full report here and print a summary")
    solve_parser.set_defaults(func=cmd_solve)

    sweep_parser = subparsers.add_parser("sweep", help="Monte-Carlo sweep over N or P_m with baselines")
    sweep_parser.add_argument("--spec", required=True, help="Sweep JSON file")
    sweep_parser.add_argument("--out", required=True, help="Output CSV path")
    sweep_parser.add_argument("--jobs", type=_positive_int, default=None, help="Concurrent trials")
    sweep_parser.add_argument(
        "--db",
        nargs="?",
        const="",
        default=None,
        help="Persist the run to SQLite (default path when given without a value)",
    )
    sweep_parser.set_defaults(func=cmd_sweep)

    runs_parser = subparsers.add_parser("show-runs", help="Show recent persisted sweep runs")
    runs_parser.add_argument("--limit", type=_positive_int, default=10)
    runs_parser.add_argument("--db", default=None, help="SQLite file (default: ~/.ris-d2d/results.db)")
    runs_parser.set_defaults(func=cmd_show_runs)

    return parser


def main(argv: List[str] | None = None) -> int:
    load_environment()
    configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
