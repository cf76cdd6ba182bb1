"""Dense Gaussian-kernel primitives shared by the solvers and estimators.

Every exponential goes through a max-shifted log-sum-exp or through a kernel
matrix whose entries were produced by one; nothing here divides raw
exponential sums.
"""

from __future__ import annotations

import numpy as np

# rows per block when a full m x n weight matrix would not fit comfortably
CHUNK_ELEMENTS = 4_000_000


def half_sq_dists(x: np.ndarray, y: np.ndarray | None = None) -> np.ndarray:
    """``0.5 * ||x_i - y_j||^2`` accumulated coordinate by coordinate.

    Exact differences (no ``|x|^2 + |y|^2 - 2xy`` cancellation), so the
    diagonal of the self-distance matrix is exactly zero.
    """
    y = x if y is None else y
    out = np.zeros((x.shape[0], y.shape[0]))
    tmp = np.empty_like(out)
    for k in range(x.shape[1]):
        np.subtract.outer(x[:, k], y[:, k], out=tmp)
        tmp *= tmp
        out += tmp
    out *= 0.5
    return out


def row_lse(m: np.ndarray) -> np.ndarray:
    """Row-wise log-sum-exp with per-row max shifting."""
    mx = m.max(axis=1)
    mx = np.where(np.isfinite(mx), mx, 0.0)
    s = np.exp(m - mx[:, None]).sum(axis=1)
    return np.log(s) + mx


def _blocks(m: int, n: int):
    step = max(1, CHUNK_ELEMENTS // max(n, 1))
    for start in range(0, m, step):
        yield slice(start, min(m, start + step))


def log_weights(points: np.ndarray, atoms: np.ndarray, log_mass: np.ndarray, epsilon: float):
    """Yield ``(block, L)`` with ``L[a, j] = log_mass[j] - 0.5 ||p_a - atoms_j||^2 / eps``."""
    for blk in _blocks(points.shape[0], atoms.shape[0]):
        c = half_sq_dists(points[blk], atoms)
        yield blk, log_mass[None, :] - c / epsilon


def soft_min(points: np.ndarray, atoms: np.ndarray, log_mass: np.ndarray, epsilon: float) -> np.ndarray:
    """``-eps * log sum_j exp(log_mass_j - 0.5||p - a_j||^2 / eps)`` at every point."""
    out = np.empty(points.shape[0])
    for blk, lw in log_weights(points, atoms, log_mass, epsilon):
        out[blk] = -epsilon * row_lse(lw)
    return out


def barycenters(points: np.ndarray, atoms: np.ndarray, log_mass: np.ndarray, epsilon: float) -> np.ndarray:
    """Gaussian-window barycenters ``sum_j a_j w_j / sum_j w_j`` at every point.

    ``w_j = exp(log_mass_j - 0.5 ||p - a_j||^2 / eps)``, shifted so the largest
    weight of each row is exactly one; rows can therefore never vanish.
    """
    out = np.empty((points.shape[0], atoms.shape[1]))
    for blk, lw in log_weights(points, atoms, log_mass, epsilon):
        lw -= lw.max(axis=1, keepdims=True)
        w = np.exp(lw, out=lw)
        out[blk] = (w @ atoms) / w.sum(axis=1, keepdims=True)
    return out


class AbsorbedKernel:
    """Stabilized kernel ``G_ij = exp((a_i + b_j - C_ij) / eps)`` for scaling iterations.

    Log-domain potentials ``f = a + eps*log(u)`` are split into an absorbed
    reference ``a`` and a scaling ``u`` that stays O(1).  Matrix-vector
    products with ``G`` then reproduce the log-sum-exp sums to rounding, and
    the reference is re-absorbed whenever a scaling drifts by more than
    ``exp(+-absorb_at)``.
    """

    def __init__(self, cost: np.ndarray, epsilon: float, a=None, b=None, absorb_at: float = 30.0):
        self.cost = cost
        self.epsilon = float(epsilon)
        self.absorb_at = float(absorb_at)
        self.a = np.zeros(cost.shape[0]) if a is None else np.array(a, dtype=float)
        self.b = np.zeros(cost.shape[1]) if b is None else np.array(b, dtype=float)
        self.rebuilds = 0
        self._build()

    def _build(self):
        g = np.negative(self.cost)
        g += self.a[:, None]
        g += self.b[None, :]
        g /= self.epsilon
        np.exp(g, out=g)
        self.kernel = g
        self.rebuilds += 1

    def absorb(self, f: np.ndarray, g: np.ndarray) -> bool:
        """Re-centre on ``(f, g)`` if either drifted too far from the reference."""
        drift = max(np.max(np.abs(f - self.a)), np.max(np.abs(g - self.b))) / self.epsilon
        if drift <= self.absorb_at:
            return False
        self.a = f.copy()
        self.b = g.copy()
        self._build()
        return True

    def row_soft_min(self, g: np.ndarray, log_mass: np.ndarray) -> np.ndarray:
        """``-eps * LSE_j[log_mass_j + (g_j - C_ij)/eps]`` for every row i."""
        v = np.exp(log_mass + (g - self.b) / self.epsilon)
        s = self.kernel @ v
        if np.all(s > 0) and np.all(np.isfinite(s)):
            return self.a - self.epsilon * np.log(s)
        # a row lost all its mass to underflow: exact pass instead
        return -self.epsilon * row_lse((log_mass + g / self.epsilon)[None, :] - self.cost / self.epsilon)

    def col_soft_min(self, f: np.ndarray, log_mass: np.ndarray) -> np.ndarray:
        """``-eps * LSE_i[log_mass_i + (f_i - C_ij)/eps]`` for every column j."""
        u = np.exp(log_mass + (f - self.a) / self.epsilon)
        s = u @ self.kernel
        if np.all(s > 0) and np.all(np.isfinite(s)):
            return self.b - self.epsilon * np.log(s)
        return -self.epsilon * row_lse((log_mass + f / self.epsilon)[None, :] - self.cost.T / self.epsilon)
