# Command-line entry point.
# Version: 1.0.0
# Subcommands: run (one scenario), sweep (router x value x seed grid), fit (quadratic trend of a CSV column).

import argparse
import logging
import sys
from pathlib import Path
from typing import Sequence

from .batch import SweepPlan, fit_trend, parse_seeds, run_single, run_sweep
from .errors import ConfigurationError, ParseError, SimulationError, ValidationError
from .scenario import RouterKind


logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_RUNTIME = 4

_ROUTER_NAMES = {
    "epidemic": RouterKind.EPIDEMIC,
    "epidemicrouter": RouterKind.EPIDEMIC,
    "maxprop": RouterKind.MAXPROP,
    "maxproprouter": RouterKind.MAXPROP,
}


def _router(raw: str) -> RouterKind:
    try:
        return _ROUTER_NAMES[raw.lower()]
    except KeyError:
        raise argparse.ArgumentTypeError(f"unknown router {raw!r} (use EpidemicRouter or MaxPropRouter)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="python -m src",
        description="Opportunistic network simulator for a remote-sea emergency scenario.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scenario and print its report")
    run.add_argument("config", type=Path, help="settings file")
    run.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                     help="override a settings key (repeatable)")
    run.add_argument("--seed", type=int, help="world seed (MovementModel.rngSeed)")
    run.add_argument("--report", type=Path, help="also write the report to this file")
    run.add_argument("--event-log", type=Path, help="write one line per event to this file")

    sweep = sub.add_parser("sweep", help="sweep one settings key across routers and seeds")
    sweep.add_argument("config", type=Path, help="base settings file")
    sweep.add_argument("--param", required=True, help="dotted settings key to sweep")
    sweep.add_argument("--from", dest="start", type=float, required=True)
    sweep.add_argument("--to", dest="stop", type=float, required=True)
    sweep.add_argument("--step", type=float, required=True)
    sweep.add_argument("--router", dest="routers", action="append", type=_router,
                       help="EpidemicRouter or MaxPropRouter (repeatable; default both)")
    sweep.add_argument("--seeds", default="1", help="comma-separated world seeds (default 1)")
    sweep.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    sweep.add_argument("--out", type=Path, required=True, help="output directory")
    sweep.add_argument("--workers", type=int, default=1, help="parallel worker processes")

    fit = sub.add_parser("fit", help="fit a quadratic trend to two CSV columns")
    fit.add_argument("csv", type=Path)
    fit.add_argument("--x", required=True, help="x column")
    fit.add_argument("--y", required=True, help="y column")
    fit.add_argument("--out", type=Path, required=True, help="fitted curve CSV")
    fit.add_argument("--samples", type=int, help="points along the fitted curve")
    return parser


def _configure_logging(command: str, verbose: bool) -> None:
    if verbose:
        level = logging.DEBUG
    elif command == "sweep":
        level = logging.INFO
    else:
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _run(args: argparse.Namespace) -> None:
    outcome = run_single(args.config, args.overrides, args.seed, args.report, args.event_log)
    sys.stdout.write(outcome.text)


def _sweep(args: argparse.Namespace) -> None:
    plan = SweepPlan(
        config=args.config,
        param=args.param,
        start=args.start,
        stop=args.stop,
        step=args.step,
        routers=tuple(dict.fromkeys(args.routers)) if args.routers else (RouterKind.EPIDEMIC, RouterKind.MAXPROP),
        seeds=parse_seeds(args.seeds),
        out_dir=args.out,
        overrides=tuple(args.overrides),
        workers=args.workers,
    )
    outcome = run_sweep(plan)
    for name, path in outcome.paths.items():
        print(f"{name}: {path}")


def _fit(args: argparse.Namespace) -> None:
    result = fit_trend(args.csv, args.x, args.y, args.out, args.samples)
    a, b, c = result.coefficients
    print(f"a: {a!r}\nb: {b!r}\nc: {c!r}")
    print(f"curve: {result.curve_path}\ncoefficients: {result.coefficients_path}")


def main(argv: Sequence[str] | None = None) -> int:
    """Parse arguments, dispatch the subcommand and map errors to exit codes."""
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging(args.command, args.verbose)
    handlers = {"run": _run, "sweep": _sweep, "fit": _fit}
    try:
        handlers[args.command](args)
    except (ValidationError, ParseError, ConfigurationError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK
