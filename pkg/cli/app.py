from __future__ import annotations

import argparse
import logging
import sys
from collections.abc import Sequence

from cli.commands import ablate, boundary, common_options, partition_report, pilot, run
from config.log import configure_logging
from core.errors import ConfigError, DataError, DivergenceError, ShapeMismatchError

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3


def create_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedproj",
        description="Desk-scale federated learning simulator (FedAvg, FedProx, FedDF, FedProj).",
    )
    parser.add_argument(
        "--log-level", default=None, help="override LOG_LEVEL for this invocation"
    )
    subparsers = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    parent = common_options()

    # Register commands
    run.register(subparsers, parent)
    pilot.register(subparsers, parent)
    ablate.register(subparsers, parent)
    partition_report.register(subparsers, parent)
    boundary.register(subparsers, parent)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = create_parser().parse_args(argv)
    configure_logging(level=args.log_level)
    if args.workers < 1:
        print(f"error: --workers must be >= 1, got {args.workers}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        return args.handler(args)
    except (ConfigError, DataError, ShapeMismatchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
