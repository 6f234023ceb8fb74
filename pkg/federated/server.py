"""Server-side fusion: weighted averaging, ensemble logits, distillation."""

from __future__ import annotations

import logging
from collections.abc import Sequence
from concurrent.futures import Executor

import numpy as np
import numpy.typing as npt

from config.experiment import DistillConfig
from core import nn
from core.errors import DataError, DivergenceError, ShapeMismatchError
from core.models import (
    Dataset,
    Logits,
    MemoryBuffer,
    Mlp,
    MlpShape,
    OptimizerState,
    ParamVector,
)
from core.seeding import SeedLike, as_seed_sequence

log = logging.getLogger(__name__)


def fedavg_aggregate(updates: Sequence[tuple[ParamVector, int]]) -> ParamVector:
    """Sample-count weighted mean, summed in the order given.

    Computed as ``ref + sum_k w_k (theta_k - ref)`` with ``ref`` the first
    update, so identical uploads (e.g. zero local epochs) average back to
    themselves bit for bit. Callers pass updates in ascending client id so the
    float summation order is fixed.
    """
    if not updates:
        raise ValueError("cannot aggregate an empty list of updates")
    length = updates[0][0].shape
    for params, count in updates:
        if params.shape != length:
            raise ShapeMismatchError(f"update of shape {params.shape}, expected {length}")
        if count < 1:
            raise ValueError(f"sample counts must be >= 1, got {count}")

    reference = np.asarray(updates[0][0], dtype=np.float64)
    total = float(sum(count for _, count in updates))
    shift = np.zeros(length, dtype=np.float64)
    for params, count in updates[1:]:
        shift += (count / total) * (params - reference)
    return reference + shift


def ensemble_logits(
    client_models: Sequence[Mlp],
    inputs: npt.ArrayLike,
    *,
    executor: Executor | None = None,
) -> Logits:
    """Row-wise arithmetic mean of the client models' logits."""
    if not client_models:
        raise ValueError("ensemble needs at least one model")
    shape = client_models[0].shape
    for model in client_models:
        if model.shape != shape:
            raise ShapeMismatchError(f"ensemble mixes shapes {shape} and {model.shape}")
    x = np.asarray(inputs, dtype=np.float64)
    if executor is None:
        outputs = [nn.forward(model, x) for model in client_models]
    else:
        outputs = list(executor.map(lambda m: nn.forward(m, x), client_models))
    total = np.zeros_like(outputs[0])
    for logits in outputs:
        total += logits
    return total / len(outputs)


def distill(
    init_params: ParamVector,
    client_models: Sequence[Mlp],
    public: Dataset,
    config: DistillConfig,
    seed: SeedLike,
    *,
    teacher_logits: Logits | None = None,
) -> ParamVector:
    """Fine-tune the averaged model towards the client ensemble on public data.

    Minimizes ``T^2 * KL(teacher || student) + alpha * ||theta - init||^2`` with
    plain SGD. The anchor stays at ``init_params`` for every epoch and the
    teacher logits are computed once.
    """
    if not config.enabled or config.epochs == 0:
        return init_params
    if public.n == 0:
        raise DataError("distillation needs a non-empty public set")
    if not client_models:
        raise ValueError("distillation needs at least one client model")
    shape = client_models[0].shape
    if init_params.shape != (shape.n_params,):
        raise ShapeMismatchError(f"init params of length {init_params.size} do not fit {shape}")

    teacher = (
        ensemble_logits(client_models, public.features)
        if teacher_logits is None
        else teacher_logits
    )
    rng = np.random.default_rng(as_seed_sequence(seed))
    params = np.array(init_params, dtype=np.float64)
    opt = OptimizerState.zeros(shape.n_params, config.lr, 0.0)
    for epoch in range(config.epochs):
        order = rng.permutation(public.n)
        for start in range(0, public.n, config.batch_size):
            rows = order[start : start + config.batch_size]
            student = nn.unflatten(shape, params)
            loss, grad = nn.kl_loss_grad(
                student, public.features[rows], teacher[rows], config.temperature
            )
            if config.alpha > 0:
                drift = params - init_params
                loss += config.alpha * float(drift @ drift)
                grad = grad + 2.0 * config.alpha * drift
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite distillation loss at epoch {epoch}")
            params, opt = nn.sgd_step(params, grad, opt)
            if not np.isfinite(params).all():
                raise DivergenceError(f"non-finite distilled parameters at epoch {epoch}")
    return params


def distill_gap(
    params: ParamVector, shape: MlpShape, public: Dataset, teacher: Logits, temperature: float
) -> float:
    """Student-teacher KL on the whole public set."""
    student = nn.unflatten(shape, params)
    return nn.kl_to_teacher(nn.forward(student, public.features), teacher, temperature)


def refresh_memory(
    client_models: Sequence[Mlp],
    public: Dataset,
    memory_indices: Sequence[int],
    *,
    with_labels: bool = False,
    executor: Executor | None = None,
) -> MemoryBuffer:
    """Memory rows with this round's ensemble logits for the next round."""
    idx = np.asarray(memory_indices, dtype=np.int64)
    if idx.size == 0:
        raise DataError("memory needs at least one index")
    if idx.min() < 0 or idx.max() >= public.n:
        raise DataError(f"memory index out of range for public set of {public.n} rows")
    inputs = public.features[idx]
    return MemoryBuffer(
        inputs=inputs,
        ensemble_logits=ensemble_logits(client_models, inputs, executor=executor),
        labels=public.labels[idx] if with_labels else None,
    )
