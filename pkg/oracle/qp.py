"""Brute-force solution of the single-constraint projection QP.

    minimize  1/2 ||g - g_new||^2   subject to  <g, g_glob> >= 0

Both KKT cases are enumerated explicitly; nothing here is shared with the
closed-form projection used during training.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

# |<g_proj, g_glob>| relative to ||g_new|| ||g_glob|| in the active case
ACTIVE_SLACK_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class QpSolution:
    g_proj: npt.NDArray[np.float64]
    multiplier: float  # lambda >= 0
    active: bool


@dataclass(frozen=True)
class KktResiduals:
    stationarity: float
    primal: float  # max(0, -<g_proj, g_glob>)
    dual: float  # max(0, -lambda)
    complementary: float  # |lambda * <g_proj, g_glob>|

    def max(self) -> float:
        return max(self.stationarity, self.primal, self.dual, self.complementary)


def _dot(a: npt.NDArray[np.float64], b: npt.NDArray[np.float64]) -> float:
    # compensated summation, independent of BLAS reduction order
    return math.fsum(float(x) * float(y) for x, y in zip(a, b))


def qp_project_oracle(g_new: npt.ArrayLike, g_glob: npt.ArrayLike) -> QpSolution:
    g = np.asarray(g_new, dtype=np.float64)
    h = np.asarray(g_glob, dtype=np.float64)
    if g.shape != h.shape:
        raise ValueError(f"length mismatch {g.shape} vs {h.shape}")
    h_sq = _dot(h, h)
    if h_sq == 0.0:
        raise ValueError("g_glob must be non-zero")

    # case 1: lambda = 0, feasible iff g_new already satisfies the constraint
    if _dot(g, h) >= 0.0:
        solution = QpSolution(g_proj=g.copy(), multiplier=0.0, active=False)
    else:
        # case 2: constraint active, <g_new + lambda g_glob, g_glob> = 0
        lam = -_dot(g, h) / h_sq
        if lam < 0.0:
            raise ArithmeticError("active case produced a negative multiplier")
        solution = QpSolution(g_proj=g + lam * h, multiplier=lam, active=True)
        # the active solution must sit on the constraint boundary
        slack = _dot(solution.g_proj, h)
        if abs(slack) > ACTIVE_SLACK_TOL * math.sqrt(_dot(g, g) * h_sq):
            raise ArithmeticError(f"active solution is off the boundary (slack {slack:.3g})")
    return solution


def kkt_residuals(
    solution: QpSolution, g_new: npt.ArrayLike, g_glob: npt.ArrayLike
) -> KktResiduals:
    g = np.asarray(g_new, dtype=np.float64)
    h = np.asarray(g_glob, dtype=np.float64)
    slack = _dot(solution.g_proj, h)
    return KktResiduals(
        stationarity=float(np.abs(solution.g_proj - g - solution.multiplier * h).max()),
        primal=max(0.0, -slack),
        dual=max(0.0, -solution.multiplier),
        complementary=abs(solution.multiplier * slack),
    )


def qp_objective(g_new: npt.ArrayLike, g_candidate: npt.ArrayLike) -> float:
    diff = np.asarray(g_candidate, dtype=np.float64) - np.asarray(g_new, dtype=np.float64)
    return 0.5 * _dot(diff, diff)
