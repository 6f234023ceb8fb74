"""Ablation sweeps: projection dropout and weight-divergence strength."""

from __future__ import annotations

import argparse
import logging
import statistics
import sys

from cli.artifacts import format_table, write_table
from cli.commands import resolve_config, with_overrides
from cli.recorder import recorded_run
from federated.orchestrator import prepare_data

log = logging.getLogger(__name__)

PROJECTION_RATES = (0.0, 0.25, 0.5, 0.75, 1.0)
# None disables the drift term
WD_ALPHAS = (0.1, 0.3, 0.5, None)


def sweep_cells(kind: str) -> list[tuple[str, list[str]]]:
    """(label, overrides) for every cell of an ablation."""
    if kind == "projection":
        return [(f"{rate:g}", [f"local.projection_rate={rate}"]) for rate in PROJECTION_RATES]
    if kind == "weight_divergence":
        return [
            ("off" if alpha is None else f"{alpha:g}", [f"distill.alpha={alpha or 0.0}"])
            for alpha in WD_ALPHAS
        ]
    raise ValueError(f"unknown ablation kind {kind!r}")


def register(subparsers: argparse._SubParsersAction, parent: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser(
        "ablate",
        parents=[parent],
        help="sweep projection_rate or the weight-divergence alpha",
    )
    parser.add_argument("kind", choices=("projection", "weight_divergence"))
    parser.add_argument("--seeds", type=int, default=3, help="number of seeds per cell")
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace) -> int:
    base = resolve_config(args, preset="pilot", extra=["method=fedproj"])
    rows: list[tuple] = []
    for offset in range(args.seeds):
        seed = base.master_seed + offset
        seeded = with_overrides(base, [f"master_seed={seed}"])
        data = prepare_data(seeded)
        for label, overrides in sweep_cells(args.kind):
            config = with_overrides(seeded, overrides)
            result = recorded_run(
                config,
                args.out / f"ablation_{args.kind}" / label / f"seed{seed}",
                workers=args.workers,
                data=data,
                boundaries="none",
            )
            if not result.metrics:
                continue
            final = result.metrics[-1]
            mean_active = statistics.fmean(m.proj_active_frac for m in result.metrics)
            rows.append((args.kind, label, seed, final.acc, final.loss, mean_active))

    write_table(
        args.out / f"ablation_{args.kind}.csv",
        ("kind", "value", "seed", "acc", "loss", "proj_active_frac"),
        rows,
    )
    summary = []
    for label, _ in sweep_cells(args.kind):
        accs = [r[3] for r in rows if r[1] == label and r[3] is not None]
        summary.append((label, statistics.fmean(accs) if accs else float("nan"), len(accs)))
    sys.stdout.write(format_table(("value", "mean_acc", "seeds"), summary))
    log.info("Ablation %s written to %s", args.kind, args.out / f"ablation_{args.kind}.csv")
    return 0
