"""On-disk formats for metrics, boundary grids, final models and summaries."""

from __future__ import annotations

import csv
import io
import json
from collections.abc import Iterable, Sequence
from pathlib import Path
from types import TracebackType
from typing import Any, TextIO

import numpy as np
import numpy.typing as npt

from core.errors import DataError
from core.models import MlpShape, ParamVector, RoundMetrics

METRICS_SCHEMA = "fedproj.metrics/1"
GRID_SCHEMA = "fedproj.boundary/1"
MODEL_SCHEMA = "fedproj.model/1"


# ── metrics ──────────────────────────────────────────────────────────


class MetricsWriter:
    """Append-only JSON-lines metrics file, flushed after every record."""

    def __init__(self, path: Path, *, method: str, seed: int, config_hash: str) -> None:
        self.path = path
        path.parent.mkdir(parents=True, exist_ok=True)
        self._fh: TextIO = path.open("w", encoding="utf-8")
        self._emit({"schema": METRICS_SCHEMA, "method": method, "seed": seed, "config_hash": config_hash})

    def _emit(self, record: dict[str, Any]) -> None:
        self._fh.write(json.dumps(record, sort_keys=False) + "\n")
        self._fh.flush()

    def write(self, metrics: RoundMetrics) -> None:
        self._emit(metrics.to_record())

    def close(self) -> None:
        if not self._fh.closed:
            self._fh.close()

    def __enter__(self) -> MetricsWriter:
        return self

    def __exit__(
        self,
        exc_type: type[BaseException] | None,
        exc: BaseException | None,
        tb: TracebackType | None,
    ) -> None:
        self.close()


def read_metrics(path: Path) -> tuple[dict[str, Any], list[dict[str, Any]]]:
    lines = [line for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]
    if not lines:
        raise DataError(f"{path} is empty")
    header = json.loads(lines[0])
    if header.get("schema") != METRICS_SCHEMA:
        raise DataError(f"{path}: unexpected schema {header.get('schema')!r}")
    return header, [json.loads(line) for line in lines[1:]]


def comparable_records(records: Iterable[dict[str, Any]]) -> list[dict[str, Any]]:
    """Records without the wall-clock field, for determinism comparisons."""
    return [{k: v for k, v in r.items() if k != "seconds"} for r in records]


# ── '#'-headed text files ────────────────────────────────────────────


def _write_header(fh: TextIO, fields: dict[str, Any]) -> None:
    for key, value in fields.items():
        fh.write(f"# {key}={value}\n")


def _split_header(text: str) -> tuple[dict[str, str], list[str]]:
    header: dict[str, str] = {}
    body: list[str] = []
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            header[key] = value
        elif line.strip():
            body.append(line)
    return header, body


def write_boundary_grid(
    path: Path,
    grid: npt.NDArray[np.float64],
    *,
    seed: int,
    method: str,
    round: int | str,
    model: str,
) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        _write_header(
            fh, {"schema": GRID_SCHEMA, "seed": seed, "method": method, "round": round, "model": model}
        )
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "class"])
        for x, y, cls in grid:
            writer.writerow([repr(float(x)), repr(float(y)), int(cls)])


def read_boundary_grid(path: Path) -> tuple[dict[str, str], npt.NDArray[np.float64]]:
    header, body = _split_header(path.read_text(encoding="utf-8"))
    if header.get("schema") != GRID_SCHEMA:
        raise DataError(f"{path}: unexpected schema {header.get('schema')!r}")
    rows = list(csv.reader(body[1:]))
    return header, np.asarray([[float(x), float(y), int(c)] for x, y, c in rows], dtype=np.float64)


def write_model(
    path: Path, params: ParamVector, shape: MlpShape, *, seed: int, method: str
) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        _write_header(fh, {"schema": MODEL_SCHEMA, "shape": shape, "seed": seed, "method": method})
        for value in params:
            fh.write(f"{float(value)!r}\n")


def read_model(path: Path) -> tuple[MlpShape, ParamVector, dict[str, str]]:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read model file {path}: {exc}") from exc
    header, body = _split_header(text)
    if header.get("schema") != MODEL_SCHEMA:
        raise DataError(f"{path}: unexpected schema {header.get('schema')!r}")
    shape = MlpShape(tuple(int(s) for s in header["shape"].split(",")))
    params = np.asarray([float(v) for v in body], dtype=np.float64)
    if params.size != shape.n_params:
        raise DataError(f"{path}: {params.size} values for shape {shape} ({shape.n_params} expected)")
    return shape, params, header


# ── summary tables ───────────────────────────────────────────────────


def write_table(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def read_table(path: Path) -> list[dict[str, str]]:
    with path.open(encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def format_table(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    """Fixed-width plain-text rendering for the terminal."""
    cells = [[str(h) for h in header]] + [
        [f"{v:.4f}" if isinstance(v, float) else str(v) for v in row] for row in rows
    ]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    out = io.StringIO()
    for i, row in enumerate(cells):
        out.write("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() + "\n")
        if i == 0:
            out.write("  ".join("-" * w for w in widths) + "\n")
    return out.getvalue()
