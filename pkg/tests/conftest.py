from __future__ import annotations

import numpy as np
import pytest

from config.experiment import ExperimentConfig, build_config
from core import nn
from core.models import Dataset, MemoryBuffer, Mlp, MlpShape
from data.datasets import IRIS_CSV, load_csv


def pytest_addoption(parser: pytest.Parser) -> None:
    parser.addoption(
        "--run-slow",
        action="store_true",
        default=False,
        help="run the multi-run acceptance checks (pilot reproduction, ablations)",
    )


def pytest_collection_modifyitems(config: pytest.Config, items: list[pytest.Item]) -> None:
    if config.getoption("--run-slow"):
        return
    skip = pytest.mark.skip(reason="needs --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def small_shape() -> MlpShape:
    return MlpShape((2, 4, 3))


@pytest.fixture
def small_model(small_shape: MlpShape) -> Mlp:
    return nn.mlp_init(small_shape, seed=7)


@pytest.fixture(scope="session")
def iris() -> Dataset:
    return load_csv(IRIS_CSV, has_header=True)


def random_memory(
    rng: np.random.Generator, n: int = 6, dim: int = 2, classes: int = 3
) -> MemoryBuffer:
    return MemoryBuffer(
        inputs=rng.normal(size=(n, dim)),
        ensemble_logits=rng.normal(scale=2.0, size=(n, classes)),
        labels=rng.integers(0, classes, size=n),
    )


def tiny_config(*overrides: str) -> ExperimentConfig:
    """Blobs, three Dirichlet clients, a one-hidden-layer net and a few short rounds."""
    raw = {
        "method": "fedproj",
        "rounds": 3,
        "n_clients": 3,
        "master_seed": 11,
        "data": {
            "source": "blobs",
            "blobs": {"per_class_n": 30, "std": 0.8},
            "pca": False,
            "memory_size": 10,
        },
        "partition": {"kind": "dirichlet", "beta": 0.5},
        "model": {"hidden_sizes": [8]},
        "local": {"epochs": 1, "batch_size": 8, "lr": 0.05, "momentum": 0.9},
        "distill": {"epochs": 1, "lr": 0.01, "batch_size": 8},
        "boundary_resolution": 6,
    }
    return build_config(raw, list(overrides))


@pytest.fixture
def tiny() -> ExperimentConfig:
    return tiny_config()
