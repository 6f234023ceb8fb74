from __future__ import annotations

import argparse
from pathlib import Path

from config.experiment import ExperimentConfig, build_config, load_config, load_preset
from config.settings import settings


def common_options() -> argparse.ArgumentParser:
    """Flags shared by every subcommand."""
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", type=Path, default=None, help="experiment YAML file")
    parent.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a config field, e.g. local.lr=0.01 (repeatable)",
    )
    parent.add_argument("--seed", type=int, default=None, help="master seed")
    parent.add_argument(
        "--out", type=Path, default=Path(settings.FEDPROJ_OUT_DIR), help="output directory"
    )
    parent.add_argument(
        "--workers",
        type=int,
        default=settings.FEDPROJ_WORKERS,
        help="threads for client updates (results never depend on it)",
    )
    return parent


def resolve_config(
    args: argparse.Namespace, *, preset: str | None = None, extra: list[str] | None = None
) -> ExperimentConfig:
    """Config from ``--config`` (or a bundled preset) plus ``--set`` and ``--seed``."""
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"master_seed={args.seed}")
    overrides.extend(extra or [])
    if args.config is None and preset is not None:
        return load_preset(preset, overrides)
    return load_config(args.config, overrides)


def with_overrides(config: ExperimentConfig, overrides: list[str]) -> ExperimentConfig:
    """A re-validated copy of ``config`` with ``overrides`` applied."""
    return build_config(config.model_dump(mode="json"), overrides)
