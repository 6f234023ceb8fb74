"""Three-client Iris pilot: FedAvg vs FedDF vs FedProj over several seeds."""

from __future__ import annotations

import argparse
import logging
import statistics
import sys

from cli.artifacts import format_table, write_table
from cli.commands import resolve_config, with_overrides
from cli.recorder import recorded_run
from config.experiment import Method
from federated.orchestrator import prepare_data

log = logging.getLogger(__name__)

PILOT_METHODS = (Method.FEDAVG, Method.FEDDF, Method.FEDPROJ)
SUMMARY_HEADER = ("method", "seed", "acc", "loss", "client_acc", "start_acc")


def register(subparsers: argparse._SubParsersAction, parent: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser(
        "pilot",
        parents=[parent],
        help="compare FedAvg, FedDF and FedProj on the pilot protocol",
    )
    parser.add_argument("--seeds", type=int, default=3, help="number of seeds per method")
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace) -> int:
    base = resolve_config(args, preset="pilot")
    first_seed = base.master_seed
    rows: list[tuple] = []

    for offset in range(args.seeds):
        seed = first_seed + offset
        seeded = with_overrides(base, [f"master_seed={seed}"])
        # splits and partition depend on the seed only, so the methods share them
        data = prepare_data(seeded)
        for method in PILOT_METHODS:
            config = with_overrides(seeded, [f"method={method.value}"])
            result = recorded_run(
                config,
                args.out / "pilot" / method.value / f"seed{seed}",
                workers=args.workers,
                data=data,
                boundaries="all" if offset == 0 else "none",
            )
            if not result.metrics:
                continue
            final = result.metrics[-1]
            rows.append(
                (method.value, seed, final.acc, final.loss, final.client_acc, final.start_acc)
            )

    write_table(args.out / "pilot_summary.csv", SUMMARY_HEADER, rows)

    means = []
    for method in PILOT_METHODS:
        accs = [r[2] for r in rows if r[0] == method.value and r[2] is not None]
        client_accs = [r[4] for r in rows if r[0] == method.value and r[4] is not None]
        means.append(
            (
                method.value,
                statistics.fmean(accs) if accs else float("nan"),
                statistics.pstdev(accs) if len(accs) > 1 else 0.0,
                statistics.fmean(client_accs) if client_accs else float("nan"),
            )
        )
    sys.stdout.write(format_table(("method", "mean_acc", "std_acc", "mean_client_acc"), means))
    log.info("Pilot summary written to %s", args.out / "pilot_summary.csv")
    return 0
