"""Splitting training rows across clients."""

from __future__ import annotations

import logging

import numpy as np
import numpy.typing as npt

from core.errors import PartitionError
from core.models import ClientPartition, Dataset
from core.seeding import SeedLike, child

log = logging.getLogger(__name__)

MAX_DIRICHLET_RETRIES = 100


def _finalize(buckets: list[list[int]], beta: float | None) -> ClientPartition:
    return ClientPartition(
        assignments=tuple(tuple(sorted(int(i) for i in rows)) for rows in buckets),
        beta=beta,
    )


def dirichlet_partition(
    data: Dataset, n_clients: int, beta: float, seed: SeedLike
) -> ClientPartition:
    """Per-class Dirichlet(beta) label skew.

    For each class the shuffled rows are cut at the cumulative proportions of
    one Dir(beta * 1) draw. A draw leaving any client empty is discarded and
    retried on a fresh substream.
    """
    if n_clients < 1:
        raise ValueError(f"n_clients must be >= 1, got {n_clients}")
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    for attempt in range(MAX_DIRICHLET_RETRIES):
        rng = np.random.default_rng(child(seed, attempt))
        buckets: list[list[int]] = [[] for _ in range(n_clients)]
        for c in range(data.class_count):
            rows = rng.permutation(np.flatnonzero(data.labels == c))
            proportions = rng.dirichlet(np.full(n_clients, beta))
            cuts = (np.cumsum(proportions)[:-1] * rows.size).astype(int)
            for client, chunk in enumerate(np.split(rows, cuts)):
                buckets[client].extend(chunk.tolist())
        if all(buckets):
            if attempt:
                log.debug("Dirichlet partition succeeded after %d retries", attempt)
            return _finalize(buckets, beta)

    raise PartitionError(
        f"could not give all {n_clients} clients a sample in {MAX_DIRICHLET_RETRIES} "
        f"draws (beta={beta}, n={data.n}); use fewer clients or a larger beta"
    )


def pilot_partition(
    labels: npt.NDArray[np.int64], class_count: int, dominant_share: float = 0.8
) -> ClientPartition:
    """Deterministic skew with one client per class.

    Client ``i`` takes ``dominant_share`` of class ``i`` and every other client
    an equal slice of the rest (0.1 each for three clients), counts rounded
    half up; the difference to the class size is settled on client 0. Rows
    are taken in index order.
    """
    n_clients = class_count
    if n_clients < 2:
        raise PartitionError("the pilot partition needs at least 2 classes")
    minority_share = (1.0 - dominant_share) / (n_clients - 1)
    buckets: list[list[int]] = [[] for _ in range(n_clients)]
    for c in range(class_count):
        rows = np.flatnonzero(labels == c).tolist()
        counts = [
            int(np.floor((dominant_share if k == c else minority_share) * len(rows) + 0.5 + 1e-9))
            for k in range(n_clients)
        ]
        counts[0] += len(rows) - sum(counts)
        if counts[0] < 0:
            # rounding overshot and client 0 had nothing to give back
            counts[c] += counts[0]
            counts[0] = 0
        start = 0
        for k, count in enumerate(counts):
            buckets[k].extend(rows[start : start + count])
            start += count
    if not all(buckets):
        raise PartitionError("pilot partition left a client without data")
    return _finalize(buckets, None)
