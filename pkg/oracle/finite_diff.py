from __future__ import annotations

from collections.abc import Callable

import numpy as np
import numpy.typing as npt


def finite_diff_grad(
    loss: Callable[[npt.NDArray[np.float64]], float],
    params: npt.ArrayLike,
    h: float = 1e-5,
) -> npt.NDArray[np.float64]:
    """Central differences, one coordinate at a time."""
    if h <= 0:
        raise ValueError(f"h must be positive, got {h}")
    theta = np.array(params, dtype=np.float64)
    grad = np.zeros_like(theta)
    for i in range(theta.size):
        saved = theta[i]
        theta[i] = saved + h
        f_plus = loss(theta.copy())
        theta[i] = saved - h
        f_minus = loss(theta.copy())
        theta[i] = saved
        grad[i] = (f_plus - f_minus) / (2.0 * h)
    return grad
