"""Independent reference computations used by several test modules."""

from __future__ import annotations

import numpy as np


def brute_force_self_potential(x: np.ndarray, epsilon: float, tol: float = 1e-15, max_iter: int = 200_000):
    """Self fixed point by symmetric scaling iteration in extended precision.

    Solves ``u_i (1/n) sum_j K_ij u_j = 1`` with ``K = exp(-|x_i-x_j|^2/(2 eps))``
    by the geometric-mean update ``u <- sqrt(u / (K u / n))`` in ``longdouble``
    and returns ``f = eps log u``.  Shares no code with the package solvers.
    """
    x = np.asarray(x, dtype=np.longdouble)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    diff = x[:, None, :] - x[None, :, :]
    K = np.exp(-np.sum(diff * diff, axis=-1) / (2 * np.longdouble(epsilon)))
    u = np.ones(n, dtype=np.longdouble)
    for _ in range(max_iter):
        new = np.sqrt(u / (K @ u / n))
        if np.max(np.abs(new - u) / new) < tol:
            u = new
            break
        u = new
    return (np.longdouble(epsilon) * np.log(u)).astype(float)


def two_point_value(delta: float, epsilon: float) -> float:
    return -(epsilon / 2) * np.log((1 + np.exp(-delta**2 / (2 * epsilon))) / 2)
