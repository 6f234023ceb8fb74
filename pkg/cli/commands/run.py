from __future__ import annotations

import argparse
import logging

from cli.commands import resolve_config
from cli.recorder import recorded_run

log = logging.getLogger(__name__)


def register(subparsers: argparse._SubParsersAction, parent: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser(
        "run",
        parents=[parent],
        help="run one federated experiment",
        description="Run one experiment; without --config the bundled pilot preset is used.",
    )
    parser.add_argument(
        "--no-boundaries", action="store_true", help="skip decision-boundary grid export"
    )
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace) -> int:
    config = resolve_config(args, preset="pilot")
    result = recorded_run(
        config,
        args.out,
        workers=args.workers,
        boundaries="none" if args.no_boundaries else "snapshots",
    )
    final = result.metrics[-1] if result.metrics else None
    log.info(
        "Run complete: %s seed %d | final acc %s | artifacts in %s",
        config.method.value,
        config.master_seed,
        f"{final.acc:.4f}" if final is not None and final.acc is not None else "-",
        args.out,
    )
    return 0
