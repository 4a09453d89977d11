"""Command-line front end.

Exit status: 0 on success, 1 when a report diagnostic or verification check
fails, 2 for usage errors, invalid configs and capacity errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from collections.abc import Sequence
from dataclasses import replace
from pathlib import Path

from .errors import BranchlabError
from .experiments import EXPERIMENTS, ConfigError, config_schema, parse_config, run
from .reporting import canonical_json, dumps_csv, dumps_json
from .verify import CLAIMS, format_table, run_battery

__all__ = ["build_parser", "main"]

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2


def _seed(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="branchlab",
        description="Simulate measurement experiments as unitary evolution and report the resulting branches.",
    )
    sub = parser.add_subparsers(dest="command", metavar="{run,verify,list,schema}")
    sub.required = True

    p_run = sub.add_parser("run", help="run one experiment and write its report")
    p_run.add_argument("experiment", choices=EXPERIMENTS, metavar="experiment", help=", ".join(EXPERIMENTS))
    p_run.add_argument("--config", type=Path, help="JSON config file (defaults used if omitted)")
    p_run.add_argument("--out", type=Path, help="output file (stdout if omitted)")
    p_run.add_argument("--format", choices=("json", "csv"), default="json")
    p_run.add_argument("--seed", type=_seed, help="override the config seed")
    p_run.add_argument("--timing", action="store_true", help="include wall time in the JSON report")
    p_run.add_argument("-v", "--verbose", action="store_true", help="print a summary to stderr")

    p_verify = sub.add_parser("verify", help="run the invariant battery and print a claim table")
    p_verify.add_argument("--claim", action="append", choices=list(CLAIMS), metavar="name",
                          help="restrict to one claim (repeatable): " + ", ".join(CLAIMS))
    p_verify.add_argument("--seed", type=_seed, default=0)
    p_verify.add_argument("-v", "--verbose", action="store_true", help="list claim descriptions first")

    sub.add_parser("list", help="print the experiment names")

    p_schema = sub.add_parser("schema", help="print the JSON Schema of an experiment config")
    p_schema.add_argument("experiment", choices=EXPERIMENTS, metavar="experiment")
    return parser


def _load_config(args: argparse.Namespace):
    data = {}
    if args.config is not None:
        try:
            data = json.loads(args.config.read_text())
        except OSError as exc:
            raise ConfigError("--config", f"cannot read {args.config}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError("--config", f"invalid JSON: {exc}") from None
    cfg = parse_config(args.experiment, data)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _cmd_run(args: argparse.Namespace) -> int:
    try:
        cfg = _load_config(args)
        report = run(cfg)
    except ConfigError as exc:
        print(f"branchlab: config error at {exc.path or '<config>'}: {exc.message}", file=sys.stderr)
        return EXIT_USAGE
    except (BranchlabError, ValueError) as exc:
        print(f"branchlab: {exc}", file=sys.stderr)
        return EXIT_USAGE

    text = dumps_csv(report) if args.format == "csv" else dumps_json(report, include_timing=args.timing)
    if args.out is None:
        sys.stdout.write(text)
    else:
        args.out.write_text(text)

    failures = report.failures()
    if args.verbose:
        print(f"{report.experiment}: {len(report.branches)} branches, {report.wall_time:.3f} s", file=sys.stderr)
    for name in failures:
        value, tol = report.diagnostics[name]
        print(f"branchlab: diagnostic {name} = {value:.3e} exceeds {tol:.1e}", file=sys.stderr)
    return EXIT_FAILED if failures else EXIT_OK


def _cmd_verify(args: argparse.Namespace) -> int:
    claims = args.claim or list(CLAIMS)
    if args.verbose:
        for name in claims:
            print(f"{name}: {CLAIMS[name][0]}")
        print()
    results = run_battery(seed=args.seed, claims=claims)
    print(format_table(results))
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAILED


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK

    if args.command == "list":
        print("\n".join(EXPERIMENTS))
        return EXIT_OK
    if args.command == "schema":
        sys.stdout.write(canonical_json(config_schema(args.experiment)))
        return EXIT_OK
    if args.command == "run":
        return _cmd_run(args)
    return _cmd_verify(args)


if __name__ == "__main__":
    raise SystemExit(main())
