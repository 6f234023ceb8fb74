"""Dataset ingestion, synthetic blobs, stratified splits and memory sampling."""

from __future__ import annotations

import csv
import logging
from collections.abc import Sequence
from pathlib import Path

import numpy as np
import numpy.typing as npt

from core.errors import DataError
from core.models import Dataset
from core.seeding import SeedLike, as_seed_sequence

log = logging.getLogger(__name__)

IRIS_CSV = Path(__file__).resolve().parent / "iris.csv"


def load_csv(path: str | Path, *, has_header: bool = False) -> Dataset:
    """Read numeric feature columns followed by one label column.

    Labels (strings or integers) are mapped to dense ids by first appearance.
    """
    path = Path(path)
    try:
        handle = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc

    rows: list[list[float]] = []
    labels: list[int] = []
    label_ids: dict[str, int] = {}
    width: int | None = None
    with handle:
        reader = csv.reader(handle)
        for line_no, record in enumerate(reader, start=1):
            if line_no == 1 and has_header:
                continue
            if not record or all(not cell.strip() for cell in record):
                continue
            if len(record) < 2:
                raise DataError("need at least one feature and a label", line=line_no)
            if width is None:
                width = len(record)
            elif len(record) != width:
                raise DataError(
                    f"expected {width} columns, found {len(record)}", line=line_no
                )
            try:
                rows.append([float(cell) for cell in record[:-1]])
            except ValueError as exc:
                raise DataError(f"non-numeric feature: {exc}", line=line_no) from exc
            name = record[-1].strip()
            labels.append(label_ids.setdefault(name, len(label_ids)))

    if not rows:
        raise DataError(f"{path} contains no data rows")
    features = np.asarray(rows, dtype=np.float64)
    if not np.isfinite(features).all():
        raise DataError(f"{path} contains non-finite feature values")
    log.debug("Loaded %s: %d rows, %d features, %d classes", path, *features.shape, len(label_ids))
    return Dataset(
        features=features,
        labels=np.asarray(labels, dtype=np.int64),
        class_count=len(label_ids),
        class_names=tuple(label_ids),
    )


def make_blobs(
    class_count: int,
    per_class_n: int,
    centers: Sequence[Sequence[float]],
    std: float,
    seed: SeedLike,
) -> Dataset:
    """Isotropic Gaussian clusters, one per class."""
    centers_arr = np.asarray(centers, dtype=np.float64)
    if centers_arr.ndim != 2 or centers_arr.shape[0] != class_count:
        raise ValueError(f"need {class_count} centers, got array shaped {centers_arr.shape}")
    if std < 0:
        raise ValueError(f"std must be non-negative, got {std}")
    rng = np.random.default_rng(as_seed_sequence(seed))
    dim = centers_arr.shape[1]
    features = np.concatenate(
        [rng.normal(loc=c, scale=std, size=(per_class_n, dim)) for c in centers_arr]
    )
    labels = np.repeat(np.arange(class_count, dtype=np.int64), per_class_n)
    return Dataset(features=features, labels=labels, class_count=class_count)


def stratified_indices(
    labels: npt.NDArray[np.int64], class_count: int, fraction: float, seed: SeedLike
) -> tuple[npt.NDArray[np.int64], npt.NDArray[np.int64]]:
    """Split row indices per class; returns (kept, held_out), both sorted."""
    if not 0.0 < fraction < 1.0:
        raise DataError(f"split fraction must be in (0, 1), got {fraction}")
    rng = np.random.default_rng(as_seed_sequence(seed))
    held: list[npt.NDArray[np.int64]] = []
    for c in range(class_count):
        rows = np.flatnonzero(labels == c)
        if rows.size == 0:
            continue
        rows = rng.permutation(rows)
        held.append(rows[: int(round(fraction * rows.size))])
    held_out = np.sort(np.concatenate(held)) if held else np.empty(0, dtype=np.int64)
    kept = np.setdiff1d(np.arange(labels.size), held_out)
    if kept.size == 0 or held_out.size == 0:
        raise DataError(
            f"fraction {fraction} leaves an empty side ({kept.size} kept, {held_out.size} held out)"
        )
    return kept, held_out


def split_public(
    data: Dataset, fraction: float, seed: SeedLike
) -> tuple[Dataset, Dataset]:
    """Stratified (train, public) split with ``fraction`` of each class public."""
    kept, held_out = stratified_indices(data.labels, data.class_count, fraction, seed)
    return data.subset(kept), data.subset(held_out)


def sample_memory(public: Dataset, m: int, seed: SeedLike) -> list[int]:
    """``m`` distinct public rows, uniform without replacement, sorted."""
    if not 1 <= m <= public.n:
        raise DataError(f"memory size must be in [1, {public.n}], got {m}")
    rng = np.random.default_rng(as_seed_sequence(seed))
    return sorted(int(i) for i in rng.choice(public.n, size=m, replace=False))
