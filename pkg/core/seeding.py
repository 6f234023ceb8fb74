"""Seed streams.

Every random draw in a run derives from ``master_seed`` plus the coordinates
of the consumer, never from shared generator state, so results do not depend
on how client updates are scheduled across workers.
"""

from __future__ import annotations

import numpy as np

_CLIENT = 0
_SERVER = 1
_SAMPLING = 2
_DATA = 3
_MODEL = 4

SeedLike = int | np.random.SeedSequence


def client_seed(master_seed: int, round: int, client_id: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([master_seed, round, _CLIENT, client_id])


def server_seed(master_seed: int, round: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([master_seed, round, _SERVER])


def sampling_seed(master_seed: int, round: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([master_seed, round, _SAMPLING])


def data_seed(master_seed: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([master_seed, _DATA])


def model_seed(master_seed: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([master_seed, _MODEL])


def as_seed_sequence(seed: SeedLike) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(int(seed))


def int_seed(seed: SeedLike) -> int:
    """Collapse a seed sequence into one 32-bit integer (for APIs taking ints)."""
    return int(as_seed_sequence(seed).generate_state(1)[0])


def children(seed: SeedLike, n: int) -> list[np.random.SeedSequence]:
    """``n`` independent child sequences of ``seed``.

    Built from the spawn key directly rather than through
    ``SeedSequence.spawn``, which advances a counter on the parent and would
    make a second call with the same object return different children.
    """
    return [child(seed, i) for i in range(n)]


def child(seed: SeedLike, index: int) -> np.random.SeedSequence:
    parent = as_seed_sequence(seed)
    return np.random.SeedSequence(parent.entropy, spawn_key=(*parent.spawn_key, index))


def streams(seed: SeedLike, n: int) -> list[np.random.Generator]:
    return [np.random.default_rng(seq) for seq in children(seed, n)]
