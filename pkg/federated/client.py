"""Client-side local training.

Every mini-batch step computes the cross-entropy gradient ``g_new``. In
fedproj mode, when a memory buffer is present, the step is projected so that
it does not increase the memory loss to first order: if ``<g_new, g_glob> < 0``
the conflicting component along ``g_glob`` is removed.
"""

from __future__ import annotations

import logging
from collections.abc import Iterable

import numpy as np
import numpy.typing as npt

from config.experiment import LocalConfig, Method
from core import nn
from core.errors import DataError, DivergenceError, ShapeMismatchError
from core.models import (
    ClientDiagnostics,
    ClientUpdate,
    Dataset,
    MemoryBuffer,
    Mlp,
    MlpShape,
    OptimizerState,
    ParamVector,
)
from core.seeding import SeedLike, streams

log = logging.getLogger(__name__)

# below this squared norm the memory constraint is vacuous and projection is skipped
MIN_GLOB_SQ_NORM = 1e-18
# a mini-batch loss above this counts as divergence even while still finite
MAX_LOCAL_LOSS = 1e8


def project_gradient(
    g_new: ParamVector, g_glob: ParamVector, epsilon: float = 1e-8
) -> ParamVector:
    """Closest-direction fix for a conflicting gradient.

    Returns ``g_new`` itself (same object) when the constraint is inactive.
    """
    if g_new.shape != g_glob.shape:
        raise ShapeMismatchError(f"g_new {g_new.shape} vs g_glob {g_glob.shape}")
    if not (np.isfinite(g_new).all() and np.isfinite(g_glob).all()):
        raise ValueError("gradients must be finite")
    dot = float(g_new @ g_glob)
    if dot >= 0.0:
        return g_new
    return g_new - (dot / (float(g_glob @ g_glob) + epsilon)) * g_glob


def memory_loss_grad(
    model: Mlp, memory: MemoryBuffer, temperature: float = 1.0
) -> tuple[float, ParamVector]:
    """Distillation loss of ``model`` against the stored ensemble logits."""
    if memory.size == 0:
        raise DataError("memory buffer is empty")
    return nn.kl_loss_grad(model, memory.inputs, memory.ensemble_logits, temperature)


def _memory_gradient(
    model: Mlp,
    memory: MemoryBuffer,
    config: LocalConfig,
    rng: np.random.Generator,
) -> ParamVector:
    rows: npt.NDArray[np.int64] | slice = slice(None)
    if config.memory_batch_size is not None and config.memory_batch_size < memory.size:
        rows = rng.choice(memory.size, size=config.memory_batch_size, replace=False)
    if config.labeled_public_gradient:
        if memory.labels is None:
            raise DataError("labeled_public_gradient needs a memory buffer with labels")
        _, grad = nn.ce_loss_grad(model, memory.inputs[rows], memory.labels[rows])
    else:
        _, grad = nn.kl_loss_grad(
            model,
            memory.inputs[rows],
            memory.ensemble_logits[rows],
            config.memory_temperature,
        )
    return grad


def local_update(
    start_params: ParamVector,
    shape: MlpShape,
    data: Dataset,
    memory: MemoryBuffer | None,
    config: LocalConfig,
    seed: SeedLike,
    *,
    client_id: int = 0,
) -> ClientUpdate:
    if data.n == 0:
        raise DataError(f"client {client_id} has no data")
    if start_params.shape != (shape.n_params,):
        raise ShapeMismatchError(
            f"start params of length {start_params.size} do not fit shape {shape}"
        )
    if data.dim != shape.input_dim:
        raise ShapeMismatchError(
            f"client {client_id} data has {data.dim} features, model expects {shape.input_dim}"
        )

    # separate streams so dropout draws never shift the batch order
    shuffle_rng, dropout_rng, memory_rng = streams(seed, 3)
    has_memory = memory is not None and memory.size > 0
    project = config.method is Method.FEDPROJ and has_memory
    prox = config.method is Method.FEDPROX and config.prox_mu > 0

    params = np.array(start_params, dtype=np.float64)
    opt = OptimizerState.zeros(shape.n_params, config.lr, config.momentum)
    l_mem_pre = (
        memory_loss_grad(nn.unflatten(shape, params), memory, config.memory_temperature)[0]
        if has_memory
        else None
    )

    epoch_losses: list[float] = []
    active_steps = 0
    total_steps = 0
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(data.n)
        batch_losses: list[float] = []
        for start in range(0, data.n, config.batch_size):
            rows = order[start : start + config.batch_size]
            model = nn.unflatten(shape, params)
            loss, g_new = nn.ce_loss_grad(model, data.features[rows], data.labels[rows])
            if not np.isfinite(loss) or loss > MAX_LOCAL_LOSS:
                raise DivergenceError(
                    f"local loss {loss:.3g} at epoch {epoch}, step {total_steps}",
                    client_id=client_id,
                )
            if prox:
                g_new = g_new + config.prox_mu * (params - start_params)

            step = g_new
            if project and dropout_rng.random() < config.projection_rate:
                g_glob = _memory_gradient(model, memory, config, memory_rng)
                if float(g_glob @ g_glob) >= MIN_GLOB_SQ_NORM:
                    step = project_gradient(g_new, g_glob, config.epsilon)
                    if step is not g_new:
                        active_steps += 1

            params, opt = nn.sgd_step(params, step, opt)
            if not np.isfinite(params).all():
                raise DivergenceError(
                    f"non-finite parameters at epoch {epoch}, step {total_steps}",
                    client_id=client_id,
                )
            batch_losses.append(loss)
            total_steps += 1
        epoch_losses.append(float(np.mean(batch_losses)))

    l_mem_post = (
        memory_loss_grad(nn.unflatten(shape, params), memory, config.memory_temperature)[0]
        if has_memory
        else None
    )
    log.debug(
        "client %d: %d steps, %d projected, final loss %s",
        client_id,
        total_steps,
        active_steps,
        f"{epoch_losses[-1]:.4f}" if epoch_losses else "n/a",
    )
    return ClientUpdate(
        client_id=client_id,
        params=params,
        sample_count=data.n,
        diagnostics=ClientDiagnostics(
            epoch_losses=tuple(epoch_losses),
            l_mem_pre=l_mem_pre,
            l_mem_post=l_mem_post,
            active_steps=active_steps,
            total_steps=total_steps,
        ),
    )


def first_order_memory_check(
    model: Mlp,
    memory: MemoryBuffer,
    g_new: ParamVector,
    lrs: Iterable[float],
    *,
    temperature: float = 1.0,
    epsilon: float = 1e-8,
    project: bool = True,
) -> list[tuple[float, float]]:
    """Memory-loss change after one plain gradient step per learning rate.

    With ``project`` the step direction is the projected gradient, whose
    first-order effect on the memory loss is removed, so the change should
    vanish quadratically in the step size.
    """
    params = nn.flatten(model)
    before, g_glob = memory_loss_grad(model, memory, temperature)
    direction = project_gradient(g_new, g_glob, epsilon) if project else g_new
    table = []
    for lr in lrs:
        stepped = nn.unflatten(model.shape, params - lr * direction)
        after, _ = memory_loss_grad(stepped, memory, temperature)
        table.append((float(lr), after - before))
    return table
