"""Dense network engine: forward pass, exact backprop, SGD with momentum.

Parameters travel as flat float64 vectors. The flatten order is layer-major:
for each layer, ``W`` in row-major (fan_in, fan_out) order followed by ``b``.
"""

from __future__ import annotations

import math

import numpy as np
import numpy.typing as npt

from core.errors import ShapeMismatchError
from core.models import Logits, Mlp, MlpShape, OptimizerState, ParamVector


def mlp_init(shape: MlpShape, seed: int) -> Mlp:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    weights = []
    biases = []
    for fan_in, fan_out in shape.layers:
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Mlp(shape=shape, weights=tuple(weights), biases=tuple(biases))


# ── parameter plumbing ───────────────────────────────────────────────


def flatten(model: Mlp) -> ParamVector:
    parts: list[npt.NDArray[np.float64]] = []
    for w, b in zip(model.weights, model.biases):
        parts.append(w.ravel())
        parts.append(b)
    return np.concatenate(parts).astype(np.float64, copy=False)


def unflatten(shape: MlpShape, v: ParamVector) -> Mlp:
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (shape.n_params,):
        raise ShapeMismatchError(
            f"shape {shape} needs {shape.n_params} parameters, got vector of shape {v.shape}"
        )
    weights = []
    biases = []
    offset = 0
    for fan_in, fan_out in shape.layers:
        n_w = fan_in * fan_out
        weights.append(v[offset : offset + n_w].reshape(fan_in, fan_out).copy())
        offset += n_w
        biases.append(v[offset : offset + fan_out].copy())
        offset += fan_out
    return Mlp(shape=shape, weights=tuple(weights), biases=tuple(biases))


def _check_same_length(a: ParamVector, b: ParamVector, what: str) -> None:
    if a.shape != b.shape:
        raise ShapeMismatchError(f"{what}: length mismatch {a.shape} vs {b.shape}")


def l2_sq_dist(a: ParamVector, b: ParamVector) -> float:
    _check_same_length(a, b, "l2_sq_dist")
    diff = a - b
    return float(diff @ diff)


# ── forward / backward ───────────────────────────────────────────────


def _as_inputs(model: Mlp, inputs: npt.ArrayLike) -> npt.NDArray[np.float64]:
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.shape.input_dim:
        raise ShapeMismatchError(
            f"model expects inputs with {model.shape.input_dim} columns, got shape {x.shape}"
        )
    return x


def _forward_trace(
    model: Mlp, x: npt.NDArray[np.float64]
) -> tuple[Logits, list[npt.NDArray[np.float64]]]:
    """Logits plus the input of every affine layer (post-activation)."""
    acts = [x]
    h = x
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w + b
        if i == last:
            return z, acts
        h = np.maximum(z, 0.0)
        acts.append(h)
    raise AssertionError("unreachable")


def forward(model: Mlp, inputs: npt.ArrayLike) -> Logits:
    logits, _ = _forward_trace(model, _as_inputs(model, inputs))
    return logits


def _backward(
    model: Mlp, acts: list[npt.NDArray[np.float64]], dlogits: npt.NDArray[np.float64]
) -> ParamVector:
    """Gradient of a loss w.r.t. the flat parameters given dloss/dlogits."""
    parts: list[npt.NDArray[np.float64]] = []
    delta = dlogits
    for i in range(len(model.weights) - 1, -1, -1):
        # built back to front, reversed below
        parts.append(delta.sum(axis=0))
        parts.append((acts[i].T @ delta).ravel())
        if i > 0:
            # ReLU derivative, taken as 0 at exactly 0
            delta = (delta @ model.weights[i].T) * (acts[i] > 0.0)
    return np.concatenate(parts[::-1])


def log_softmax(logits: Logits, temperature: float = 1.0) -> npt.NDArray[np.float64]:
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    z = np.asarray(logits, dtype=np.float64) / temperature
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(logits: Logits, temperature: float = 1.0) -> npt.NDArray[np.float64]:
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    z = np.asarray(logits, dtype=np.float64) / temperature
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def ce_loss_grad(
    model: Mlp, inputs: npt.ArrayLike, labels: npt.ArrayLike
) -> tuple[float, ParamVector]:
    """Mean cross-entropy and its exact gradient."""
    x = _as_inputs(model, inputs)
    y = np.asarray(labels, dtype=np.int64)
    if y.shape != (x.shape[0],):
        raise ShapeMismatchError(f"{x.shape[0]} inputs but labels shaped {y.shape}")
    n_classes = model.shape.n_classes
    if y.size and (y.min() < 0 or y.max() >= n_classes):
        raise ValueError(f"labels must lie in [0, {n_classes})")

    logits, acts = _forward_trace(model, x)
    n = x.shape[0]
    logp = log_softmax(logits)
    rows = np.arange(n)
    loss = float(-logp[rows, y].mean())

    dlogits = np.exp(logp)
    dlogits[rows, y] -= 1.0
    dlogits /= n
    return loss, _backward(model, acts, dlogits)


def kl_to_teacher(
    student_logits: Logits, teacher_logits: Logits, temperature: float
) -> float:
    """T^2 * mean_rows KL(softmax(teacher/T) || softmax(student/T))."""
    if student_logits.shape != teacher_logits.shape:
        raise ShapeMismatchError(
            f"student logits {student_logits.shape} vs teacher logits {teacher_logits.shape}"
        )
    log_p = log_softmax(teacher_logits, temperature)
    log_q = log_softmax(student_logits, temperature)
    per_row = (np.exp(log_p) * (log_p - log_q)).sum(axis=1)
    # rounding can leave tiny negatives on identical rows
    return float(temperature**2 * np.maximum(per_row, 0.0).mean())


def kl_loss_grad(
    model: Mlp, inputs: npt.ArrayLike, teacher_logits: Logits, temperature: float = 1.0
) -> tuple[float, ParamVector]:
    """Temperature-scaled distillation loss against fixed teacher logits.

    The teacher is treated as a constant; the gradient w.r.t. the student
    logits is ``T * (q - p) / n`` with ``p``/``q`` the softened teacher and
    student distributions.
    """
    x = _as_inputs(model, inputs)
    teacher = np.asarray(teacher_logits, dtype=np.float64)
    if teacher.shape != (x.shape[0], model.shape.n_classes):
        raise ShapeMismatchError(
            f"teacher logits shaped {teacher.shape}, expected {(x.shape[0], model.shape.n_classes)}"
        )
    logits, acts = _forward_trace(model, x)
    loss = kl_to_teacher(logits, teacher, temperature)
    p = softmax(teacher, temperature)
    q = softmax(logits, temperature)
    dlogits = temperature * (q - p) / x.shape[0]
    return loss, _backward(model, acts, dlogits)


# ── optimizer ────────────────────────────────────────────────────────


def sgd_step(
    params: ParamVector, grad: ParamVector, state: OptimizerState
) -> tuple[ParamVector, OptimizerState]:
    """v' = momentum * v + grad; theta' = theta - lr * v'."""
    _check_same_length(params, grad, "sgd_step")
    _check_same_length(params, state.velocity, "sgd_step velocity")
    velocity = state.momentum * state.velocity + grad
    new_params = params - state.lr * velocity
    return new_params, OptimizerState(velocity=velocity, lr=state.lr, momentum=state.momentum)
