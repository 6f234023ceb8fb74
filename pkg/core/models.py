from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
import numpy.typing as npt

from core.errors import ShapeMismatchError

# Flat float64 parameter (or gradient) vector in flatten order.
ParamVector = npt.NDArray[np.float64]
# batch x classes matrix of raw model outputs.
Logits = npt.NDArray[np.float64]


@dataclass(frozen=True)
class MlpShape:
    """Layer widths: input dim, hidden dims..., class count."""

    layer_sizes: tuple[int, ...]

    def __post_init__(self) -> None:
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 2:
            raise ValueError(f"an MLP needs at least 2 layer sizes, got {sizes}")
        if any(s < 1 for s in sizes):
            raise ValueError(f"layer sizes must be >= 1, got {sizes}")
        object.__setattr__(self, "layer_sizes", sizes)

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_classes(self) -> int:
        return self.layer_sizes[-1]

    @property
    def layers(self) -> list[tuple[int, int]]:
        """(fan_in, fan_out) per affine layer."""
        return list(zip(self.layer_sizes[:-1], self.layer_sizes[1:]))

    @property
    def n_params(self) -> int:
        return sum(fan_in * fan_out + fan_out for fan_in, fan_out in self.layers)

    def __str__(self) -> str:
        return ",".join(str(s) for s in self.layer_sizes)


@dataclass(frozen=True, eq=False)
class Mlp:
    """Dense ReLU network; the output layer is linear.

    ``weights[l]`` has shape (fan_in, fan_out) so a layer computes ``h @ W + b``.
    """

    shape: MlpShape
    weights: tuple[npt.NDArray[np.float64], ...]
    biases: tuple[npt.NDArray[np.float64], ...]
    activation: str = "relu"

    def __post_init__(self) -> None:
        layers = self.shape.layers
        if len(self.weights) != len(layers) or len(self.biases) != len(layers):
            raise ShapeMismatchError(
                f"expected {len(layers)} layers, got {len(self.weights)} weights "
                f"and {len(self.biases)} biases"
            )
        for i, ((fan_in, fan_out), w, b) in enumerate(
            zip(layers, self.weights, self.biases)
        ):
            if w.shape != (fan_in, fan_out) or b.shape != (fan_out,):
                raise ShapeMismatchError(
                    f"layer {i}: expected W {(fan_in, fan_out)} and b {(fan_out,)}, "
                    f"got {w.shape} and {b.shape}"
                )


@dataclass(eq=False)
class OptimizerState:
    """SGD-with-momentum state."""

    velocity: ParamVector
    lr: float
    momentum: float = 0.0

    def __post_init__(self) -> None:
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")

    @classmethod
    def zeros(cls, n_params: int, lr: float, momentum: float = 0.0) -> OptimizerState:
        return cls(velocity=np.zeros(n_params), lr=lr, momentum=momentum)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Labelled feature matrix."""

    features: npt.NDArray[np.float64]
    labels: npt.NDArray[np.int64]
    class_count: int
    class_names: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.features.ndim != 2:
            raise ShapeMismatchError(f"features must be 2-D, got {self.features.shape}")
        if self.labels.shape != (self.features.shape[0],):
            raise ShapeMismatchError(
                f"{self.features.shape[0]} feature rows but labels shaped {self.labels.shape}"
            )
        if self.labels.size and (
            self.labels.min() < 0 or self.labels.max() >= self.class_count
        ):
            raise ValueError(f"labels must lie in [0, {self.class_count})")

    @property
    def n(self) -> int:
        return int(self.features.shape[0])

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    def subset(self, indices: npt.ArrayLike) -> Dataset:
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(
            features=self.features[idx],
            labels=self.labels[idx],
            class_count=self.class_count,
            class_names=self.class_names,
        )

    def class_counts(self) -> npt.NDArray[np.int64]:
        return np.bincount(self.labels, minlength=self.class_count)


@dataclass(frozen=True)
class ClientPartition:
    """Row indices owned by each client, sorted ascending."""

    assignments: tuple[tuple[int, ...], ...]
    beta: float | None = None  # None for the deterministic pilot split

    @property
    def n_clients(self) -> int:
        return len(self.assignments)

    @property
    def sizes(self) -> list[int]:
        return [len(a) for a in self.assignments]

    def class_matrix(self, labels: npt.NDArray[np.int64], class_count: int) -> npt.NDArray[np.int64]:
        """clients x classes count matrix."""
        return np.stack(
            [
                np.bincount(labels[list(rows)], minlength=class_count)
                if rows
                else np.zeros(class_count, dtype=np.int64)
                for rows in self.assignments
            ]
        )


@dataclass(frozen=True, eq=False)
class PcaTransform:
    mean: npt.NDArray[np.float64]
    components: npt.NDArray[np.float64]  # 2 x d, orthonormal rows
    explained_variance: npt.NDArray[np.float64]

    def transform(self, features: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
        return (features - self.mean) @ self.components.T


@dataclass(frozen=True, eq=False)
class MemoryBuffer:
    """Public samples paired with the ensemble logits of the last round."""

    inputs: npt.NDArray[np.float64]
    ensemble_logits: Logits
    labels: npt.NDArray[np.int64] | None = None

    def __post_init__(self) -> None:
        if self.inputs.shape[0] != self.ensemble_logits.shape[0]:
            raise ShapeMismatchError(
                f"memory has {self.inputs.shape[0]} inputs but "
                f"{self.ensemble_logits.shape[0]} logit rows"
            )
        if self.labels is not None and self.labels.shape[0] != self.inputs.shape[0]:
            raise ShapeMismatchError("memory labels and inputs differ in length")
        if not (np.isfinite(self.inputs).all() and np.isfinite(self.ensemble_logits).all()):
            raise ValueError("memory buffer entries must be finite")

    @property
    def size(self) -> int:
        return int(self.inputs.shape[0])


@dataclass(frozen=True)
class ClientDiagnostics:
    epoch_losses: tuple[float, ...]
    l_mem_pre: float | None  # None when the client had no memory
    l_mem_post: float | None
    active_steps: int  # steps where projection changed the gradient
    total_steps: int


@dataclass(frozen=True, eq=False)
class ClientUpdate:
    """Outcome of one client's local training."""

    client_id: int
    params: ParamVector
    sample_count: int
    diagnostics: ClientDiagnostics

    def __post_init__(self) -> None:
        if self.sample_count < 1:
            raise ValueError("sample_count must be >= 1")


@dataclass(frozen=True, eq=False)
class ServerState:
    global_params: ParamVector
    round: int = 0
    memory: MemoryBuffer | None = None
    # FedAvg result of the round that produced this state, before distillation
    averaged_params: ParamVector | None = None
    # (client_id, params) uploaded in the round that produced this state
    client_params: tuple[tuple[int, ParamVector], ...] = ()

    def __post_init__(self) -> None:
        if self.round < 0:
            raise ValueError("round must be >= 0")


@dataclass
class RoundMetrics:
    """Evaluation record of one federated round."""

    round: int
    acc: float | None
    loss: float | None
    start_acc: float | None
    client_acc: float | None
    local_loss: float | None
    l_mem_pre: float | None
    l_mem_post: float | None
    proj_active_frac: float
    kd_pre: float | None
    kd_post: float | None
    clients: list[int] = field(default_factory=list)
    seconds: float = 0.0

    def to_record(self, *, include_timing: bool = True) -> dict[str, Any]:
        record: dict[str, Any] = {
            "round": self.round,
            "acc": self.acc,
            "loss": self.loss,
            "start_acc": self.start_acc,
            "client_acc": self.client_acc,
            "local_loss": self.local_loss,
            "l_mem_pre": self.l_mem_pre,
            "l_mem_post": self.l_mem_post,
            "proj_active_frac": self.proj_active_frac,
            "kd_pre": self.kd_pre,
            "kd_post": self.kd_post,
            "clients": list(self.clients),
        }
        if include_timing:
            record["seconds"] = round(self.seconds, 4)
        return record
