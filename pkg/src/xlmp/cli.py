"""Command-line front door.

Subcommands:
    run       execute an experiment spec, writing CSV + figures + manifest
    validate  parse a spec and print its fully resolved form
    table2    print the closed-form complexity table for (M, K, S, T)
    version   print the tool version

``--spec defaults`` (or an empty document) resolves to the reference
scenario. Worker threads come from --threads, falling back to the
XLMP_THREADS environment variable, then 1.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

from . import __version__
from .harness import (
    ExperimentSpec,
    SpecError,
    parse_spec,
    run_experiment,
    spec_to_json,
)
from .metrics import complexity_count
from .precoding import PrecoderMethod

__all__ = ["cli_main", "main"]

_TABLE_SCHEMES = (
    ("rzf", PrecoderMethod.RZF_DIRECT),
    ("rka", PrecoderMethod.RKA),
    ("swor_rka", PrecoderMethod.SWOR_RKA),
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xlmp",
        description="XL-MIMO randomized-Kaczmarz precoding simulation lab",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment spec")
    run.add_argument("--spec", required=True,
                     help="path to a JSON spec, or 'defaults'")
    run.add_argument("--seed", type=int, default=None, help="override the RNG seed")
    run.add_argument("--out", default=None, help="output directory")
    run.add_argument("--trials", type=int, default=None,
                     help="override the Monte-Carlo ensemble size")
    run.add_argument("--threads", type=int, default=None,
                     help="worker threads (default: XLMP_THREADS or 1)")
    run.add_argument("--no-figures", action="store_true",
                     help="skip PNG rendering, write CSV + manifest only")

    val = sub.add_parser("validate", help="parse a spec and print it resolved")
    val.add_argument("--spec", required=True,
                     help="path to a JSON spec, or 'defaults'")

    tab = sub.add_parser("table2", help="print the complexity table")
    tab.add_argument("--m", type=int, default=64, help="antennas per subarray")
    tab.add_argument("--k", type=int, default=16, help="users per subarray")
    tab.add_argument("--s", type=int, default=4, help="subarray count")
    tab.add_argument("--t", type=int, default=200, help="solver iterations")

    sub.add_parser("version", help="print the tool version")
    return parser


def _load_spec(arg: str) -> ExperimentSpec:
    if arg == "defaults":
        return parse_spec("{}")
    try:
        text = open(arg, "r", encoding="utf-8").read()
    except OSError as exc:
        raise SpecError(f"cannot read spec file {arg!r}: {exc.strerror}") from None
    return parse_spec(text)


def _resolve_threads(flag: int | None) -> int:
    if flag is not None:
        return max(1, flag)
    env = os.environ.get("XLMP_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise SpecError(f"XLMP_THREADS must be an integer, got {env!r}") from None
    return 1


def cli_main(argv: list[str] | None = None) -> int:
    """Entry point; returns the process exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse usage errors
        return int(exc.code or 0)

    try:
        if args.command == "version":
            print(f"xlmp {__version__}")
            return 0

        if args.command == "table2":
            for name, scheme in _TABLE_SCHEMES:
                ops = complexity_count(scheme, args.m, args.k, args.s, args.t)
                print(f"{name:<10} {ops}")
            return 0

        if args.command == "validate":
            spec = _load_spec(args.spec)
            print(spec_to_json(spec))
            return 0

        # run
        spec = _load_spec(args.spec)
        if args.seed is not None:
            spec = replace(spec, base=replace(spec.base, seed=args.seed))
        if args.trials is not None:
            spec = replace(spec, trials=args.trials)
        result = run_experiment(
            spec,
            out_dir=args.out,
            threads=_resolve_threads(args.threads),
            make_figures=not args.no_figures,
        )
        for path in [result.csv_path, *result.figure_paths, result.manifest_path]:
            print(path)
        bad = [r for r in result.rows if r.get("status") != "ok"]
        if bad:
            for row in bad:
                print(f"warning: {row.get('method') or row.get('scheme')}: "
                      f"{row['status']}", file=sys.stderr)
        return 0
    except (SpecError, ValueError, OSError) as exc:
        print(f"xlmp: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    """console_scripts shim."""
    sys.exit(cli_main())
