"""Per-run artifact recording hooked into the round loop."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Literal

from cli.artifacts import MetricsWriter, write_boundary_grid, write_model
from config.experiment import ExperimentConfig, dump_config
from core.models import RoundMetrics, ServerState
from federated.orchestrator import (
    ExperimentResult,
    FederatedData,
    data_bounds,
    export_boundary_grid,
    prepare_data,
    run_experiment,
)

log = logging.getLogger(__name__)

BoundaryMode = Literal["none", "snapshots", "all"]


def snapshot_rounds(total_rounds: int) -> set[int]:
    """Completed-round counts that get a global boundary grid: 1, T/2, T."""
    if total_rounds < 1:
        return set()
    return {1, max(total_rounds // 2, 1), total_rounds}


class RunRecorder:
    """Writes metrics after every round plus boundary grids and the final model."""

    def __init__(
        self,
        out_dir: Path,
        config: ExperimentConfig,
        data: FederatedData,
        *,
        boundaries: BoundaryMode = "snapshots",
    ) -> None:
        self.out_dir = out_dir
        self.config = config
        self.data = data
        self.boundaries = boundaries
        if boundaries != "none" and data.shape.input_dim != 2:
            log.warning("model input is %d-D; skipping boundary grids", data.shape.input_dim)
            self.boundaries = "none"
        self._bounds = data_bounds(data.train) if self.boundaries != "none" else None
        self._snapshots = snapshot_rounds(config.rounds)

        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "config.resolved.yaml").write_text(dump_config(config), encoding="utf-8")
        self._metrics = MetricsWriter(
            out_dir / "metrics.jsonl",
            method=config.method.value,
            seed=config.master_seed,
            config_hash=config.fingerprint(),
        )

    def _grid(self, params, completed: int, label: str) -> None:
        assert self._bounds is not None
        grid = export_boundary_grid(
            params, self.data.shape, self._bounds, self.config.boundary_resolution
        )
        write_boundary_grid(
            self.out_dir / "boundary" / f"round{completed:03d}_{label}.csv",
            grid,
            seed=self.config.master_seed,
            method=self.config.method.value,
            round=completed,
            model=label,
        )

    def on_round(self, state: ServerState, metrics: RoundMetrics) -> None:
        self._metrics.write(metrics)
        if self.boundaries == "none":
            return
        completed = state.round
        if self.boundaries == "all" or completed in self._snapshots:
            self._grid(state.global_params, completed, "global")
        if self.boundaries == "all" or completed == self.config.rounds:
            for client_id, params in state.client_params:
                self._grid(params, completed, f"client{client_id}")

    def finish(self, result: ExperimentResult) -> None:
        self._metrics.close()
        write_model(
            self.out_dir / "model.txt",
            result.final_state.global_params,
            result.data.shape,
            seed=self.config.master_seed,
            method=self.config.method.value,
        )

    def close(self) -> None:
        self._metrics.close()


def recorded_run(
    config: ExperimentConfig,
    out_dir: Path,
    *,
    workers: int = 1,
    data: FederatedData | None = None,
    boundaries: BoundaryMode = "snapshots",
) -> ExperimentResult:
    """run_experiment with artifacts written to ``out_dir`` as it goes."""
    data = data if data is not None else prepare_data(config)
    recorder = RunRecorder(out_dir, config, data, boundaries=boundaries)
    try:
        result = run_experiment(config, workers=workers, on_round=recorder.on_round, data=data)
    finally:
        recorder.close()
    recorder.finish(result)
    return result
