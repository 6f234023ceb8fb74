"""Re-export a decision-boundary grid from a saved ``model.txt``."""

from __future__ import annotations

import argparse
import logging
from pathlib import Path

from cli.artifacts import read_model, write_boundary_grid
from cli.commands import resolve_config
from core.errors import ConfigError
from federated.orchestrator import data_bounds, export_boundary_grid, prepare_data

log = logging.getLogger(__name__)


def register(subparsers: argparse._SubParsersAction, parent: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser(
        "boundary",
        parents=[parent],
        help="export a decision-boundary grid for a saved model",
    )
    parser.add_argument("model", type=Path, help="model.txt file")
    parser.add_argument("--resolution", type=int, default=None, help="grid points per axis")
    parser.add_argument(
        "--bounds",
        type=float,
        nargs=4,
        metavar=("XMIN", "XMAX", "YMIN", "YMAX"),
        default=None,
        help="grid extent; defaults to the training data range plus a margin",
    )
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace) -> int:
    shape, params, header = read_model(args.model)
    config = None
    if args.bounds is None or args.resolution is None:
        config = resolve_config(args, preset="pilot")
    resolution = args.resolution if args.resolution is not None else config.boundary_resolution
    if resolution < 2:
        raise ConfigError(f"resolution: must be >= 2, got {resolution}")

    if args.bounds is not None:
        bounds = tuple(args.bounds)
    else:
        data = prepare_data(config)
        if data.shape != shape:
            raise ConfigError(
                f"model shape {shape} does not match the config's data shape {data.shape}; "
                "pass --bounds explicitly"
            )
        bounds = data_bounds(data.train)

    grid = export_boundary_grid(params, shape, bounds, resolution)
    path = args.out / f"boundary_{args.model.stem}.csv"
    write_boundary_grid(
        path,
        grid,
        seed=int(header.get("seed", 0)),
        method=header.get("method", "unknown"),
        round="final",
        model="global",
    )
    log.info("Wrote %dx%d boundary grid to %s", resolution, resolution, path)
    return 0
