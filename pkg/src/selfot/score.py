"""Score estimators built from Gaussian-window barycenters.

The self-transport estimator is ``s(x) = -(2/eps) grad f(x) = (2/eps)(B(x) - x)``
with ``B`` the potential-weighted barycenter; the kernel density baseline is
``(1/eps)(B0(x) - x)`` with ``B0`` the unweighted one.  Neither divides raw
exponential sums.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np

from ._kernels import barycenters, log_weights, row_lse
from .core import GaussianModel, Model, SampleSet, log_density, true_score
from .errors import ValidationError
from .self_sinkhorn import SelfPotential, potential_gradient

KINDS = ("self_ot", "kde", "exact")


def _as_batch(x, d: int):
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    pts = x.reshape(1, -1) if single else x
    if pts.shape[1] != d:
        raise ValidationError(f"points have dimension {pts.shape[1]}, expected {d}")
    return pts, single


def self_ot_score(potential: SelfPotential, x) -> np.ndarray:
    """Self-transport score estimate ``-(2/eps) grad f(x)``."""
    return -(2.0 / potential.epsilon) * potential_gradient(potential, x)


def kde_score(samples: SampleSet, epsilon: float, x) -> np.ndarray:
    """Gradient of the log Gaussian-kernel density estimate with bandwidth ``sqrt(eps)``."""
    epsilon = float(epsilon)
    if not epsilon > 0:
        raise ValidationError(f"epsilon must be positive, got {epsilon}")
    pts, single = _as_batch(x, samples.d)
    log_mass = np.full(samples.n, -np.log(samples.n))
    out = (barycenters(pts, samples.data, log_mass, epsilon) - pts) / epsilon
    return out[0] if single else out


def weighted_sqrt_density_estimate(samples: SampleSet, epsilon: float, model: Model, x):
    """``(1/n) sum_i exp(-||x - X_i||^2/(2 eps)) / ((2 pi eps)^{d/2} sqrt(rho(X_i)))``.

    Formed as a log-sum-exp over the log-weights ``-log n - log rho(X_i) / 2``.
    Approximates ``sqrt(rho(x))`` for large ``n`` and small ``eps``.
    """
    epsilon = float(epsilon)
    pts, single = _as_batch(x, samples.d)
    log_mass = -np.log(samples.n) - 0.5 * np.atleast_1d(log_density(model, samples.data))
    d = samples.d
    out = np.empty(pts.shape[0])
    for blk, lw in log_weights(pts, samples.data, log_mass, epsilon):
        out[blk] = np.exp(row_lse(lw) - 0.5 * d * np.log(2 * np.pi * epsilon))
    return float(out[0]) if single else out


@dataclass(frozen=True)
class ScoreField:
    """A vector field ``R^d -> R^d`` evaluated on point batches.

    Build with :meth:`self_ot`, :meth:`kde` or :meth:`exact`.
    """

    kind: str
    backing: Any
    epsilon: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown score kind {self.kind!r}")

    @classmethod
    def self_ot(cls, potential: SelfPotential) -> "ScoreField":
        return cls("self_ot", potential, potential.epsilon)

    @classmethod
    def kde(cls, samples: SampleSet, epsilon: float) -> "ScoreField":
        return cls("kde", samples, float(epsilon))

    @classmethod
    def exact(cls, model: Model) -> "ScoreField":
        return cls("exact", model)

    @property
    def dim(self) -> int:
        if self.kind == "exact":
            return self.backing.dim
        return self.backing.d

    def __call__(self, x) -> np.ndarray:
        if self.kind == "self_ot":
            return self_ot_score(self.backing, x)
        if self.kind == "kde":
            return kde_score(self.backing, self.epsilon, x)
        return true_score(self.backing, x)


def mc_l2_error(estimate, truth, eval_set: SampleSet | np.ndarray) -> float:
    """Monte-Carlo squared L2 distance ``(1/m) sum_k ||estimate(Z_k) - truth(Z_k)||^2``.

    Accumulated with :func:`math.fsum`, so the result does not depend on
    evaluation order.
    """
    z = eval_set.data if isinstance(eval_set, SampleSet) else np.atleast_2d(eval_set)
    diff = np.atleast_2d(estimate(z)) - np.atleast_2d(truth(z))
    sq = np.sum(diff * diff, axis=1)
    return math.fsum(sq.tolist()) / z.shape[0]


def population_bias_l2(model: GaussianModel, epsilon: float) -> float:
    """Exact ``||s_eps - grad log rho||^2_{L2(rho)}`` for the population potential.

    Both fields are linear in ``x - mean``; with ``D = A^{-1} - (2/eps) S`` the
    integral is ``tr(D A D^T)``.
    """
    from .gaussian_oracle import solve_self_quadratic

    q = solve_self_quadratic(model.covariance, epsilon)
    D = model.precision - (2.0 / float(epsilon)) * q.S
    return float(np.trace(D @ model.covariance @ D.T))
