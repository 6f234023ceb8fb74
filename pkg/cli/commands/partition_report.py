from __future__ import annotations

import argparse
import logging
import sys

from cli.artifacts import format_table, write_table
from cli.commands import resolve_config
from federated.orchestrator import prepare_data

log = logging.getLogger(__name__)


def register(subparsers: argparse._SubParsersAction, parent: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser(
        "partition-report",
        parents=[parent],
        help="print the per-client class-count matrix of a config's partition",
    )
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace) -> int:
    config = resolve_config(args, preset="pilot")
    data = prepare_data(config)
    matrix = data.partition.class_matrix(data.train.labels, data.train.class_count)
    names = data.train.class_names or tuple(f"class{c}" for c in range(data.train.class_count))
    header = ("client", *names, "total")
    rows = [(cid, *(int(v) for v in counts), int(counts.sum())) for cid, counts in enumerate(matrix)]

    write_table(args.out / "partition_report.csv", header, rows)
    sys.stdout.write(format_table(header, rows))
    log.info(
        "Partition of %d rows over %d clients (beta %s)",
        data.train.n,
        data.partition.n_clients,
        data.partition.beta if data.partition.beta is not None else "pilot",
    )
    return 0
