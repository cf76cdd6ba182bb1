"""Two-measure entropic transport on samples and its Sinkhorn operators.

Potentials ``(f, g)`` on ``X_1..X_n`` and ``Y_1..Y_m`` satisfy

    f_i = -eps log (1/m) sum_j exp((g_j - C_ij)/eps),
    g_j = -eps log (1/n) sum_i exp((f_i - C_ij)/eps),

with ``C_ij = ||X_i - Y_j||^2 / 2``.  The plan density against the product of
the empirical measures is ``p_ij = exp((f_i + g_j - C_ij)/eps)``, and the two
Sinkhorn operators are the Markov kernels it induces:

* ``K^nu`` maps functions on ``Y`` to functions on ``X`` by ``(1/m) sum_j p_ij h_j``;
* ``K^mu`` maps functions on ``X`` to functions on ``Y`` by ``(1/n) sum_i p_ij h_i``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._kernels import AbsorbedKernel, barycenters, half_sq_dists, row_lse
from .core import SampleSet
from .errors import ConvergenceError, ValidationError

SCHEMA_VERSION = 1
NORMALIZATIONS = ("mean_zero", "symmetric")


@dataclass(frozen=True)
class DualPotentialPair:
    """Sinkhorn potentials with their source and target samples.

    ``residual`` is the largest relative marginal defect
    ``max(|n * rowsum - 1|, |m * colsum - 1|)`` of the plan.
    """

    epsilon: float
    f_values: np.ndarray
    g_values: np.ndarray
    source: SampleSet
    target: SampleSet
    iterations: int = 0
    residual: float = float("nan")
    tol: float | None = None

    @property
    def n(self) -> int:
        return self.source.n

    @property
    def m(self) -> int:
        return self.target.n


def _log_plan(pair: DualPotentialPair) -> np.ndarray:
    cost = half_sq_dists(pair.source.data, pair.target.data)
    return (pair.f_values[:, None] + pair.g_values[None, :] - cost) / pair.epsilon


def marginal_defect(pair: DualPotentialPair) -> float:
    """Recompute the relative marginal defect from the stored potentials."""
    lp = _log_plan(pair)
    rows = np.exp(row_lse(lp) - np.log(pair.m))
    cols = np.exp(row_lse(lp.T) - np.log(pair.n))
    return float(max(np.max(np.abs(rows - 1)), np.max(np.abs(cols - 1))))


def fit_dual_potentials(
    X: SampleSet,
    Y: SampleSet,
    epsilon: float,
    tol: float = 1e-10,
    max_iter: int = 20_000,
    normalization: str = "mean_zero",
) -> DualPotentialPair:
    """Log-domain Sinkhorn iterations between two empirical measures.

    Parameters
    ----------
    X, Y : SampleSet
        Source and target samples of equal dimension.
    epsilon : float
        Regularization.
    tol : float
        Target relative marginal defect.  Column marginals are exact after
        each ``g`` update, so the row defect is the one monitored.
    max_iter : int
        Maximum number of ``(f, g)`` sweeps.
    normalization : {"mean_zero", "symmetric"}
        Additive gauge of the pair.  ``"mean_zero"`` shifts ``f`` to have
        mean zero over ``X``.  ``"symmetric"`` makes the means of ``f`` and
        ``g`` equal, so that ``X = Y`` gives ``f = g``.

    Returns
    -------
    DualPotentialPair
    """
    epsilon = float(epsilon)
    if not np.isfinite(epsilon) or epsilon <= 0:
        raise ValidationError(f"epsilon must be positive, got {epsilon}")
    if X.d != Y.d:
        raise ValidationError(f"source has dimension {X.d}, target {Y.d}")
    if normalization not in NORMALIZATIONS:
        raise ValidationError(f"unknown normalization {normalization!r}")
    n, m = X.n, Y.n
    cost = half_sq_dists(X.data, Y.data)
    log_a = np.full(n, -np.log(n))
    log_b = np.full(m, -np.log(m))
    f = np.zeros(n)
    g = -epsilon * row_lse((log_a[:, None] - cost / epsilon).T)
    ker = AbsorbedKernel(cost, epsilon, a=f, b=g)
    f = ker.row_soft_min(g, log_b)
    defect = np.inf
    for it in range(1, max_iter + 1):
        ker.absorb(f, g)
        g = ker.col_soft_min(f, log_a)
        t = ker.row_soft_min(g, log_b)
        defect = float(np.max(np.abs(np.expm1((f - t) / epsilon))))
        if defect <= tol:
            break
        f = t
    else:
        raise ConvergenceError("Sinkhorn iterations did not converge", defect, max_iter)
    shift = np.mean(f) if normalization == "mean_zero" else 0.5 * (np.mean(f) - np.mean(g))
    return DualPotentialPair(epsilon, f - shift, g + shift, X, Y, it, defect, tol)


def plan_matrix(pair: DualPotentialPair) -> np.ndarray:
    """Plan weights ``exp((f_i + g_j - C_ij)/eps) / (n m)``."""
    return np.exp(_log_plan(pair) - np.log(pair.n) - np.log(pair.m))


def entropic_map(pair: DualPotentialPair, x) -> np.ndarray:
    """Barycentric projection of the plan at arbitrary source points."""
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    pts = x.reshape(1, -1) if single else x
    if pts.shape[1] != pair.source.d:
        raise ValidationError(f"points have dimension {pts.shape[1]}, pair has {pair.source.d}")
    log_mass = pair.g_values / pair.epsilon - np.log(pair.m)
    out = barycenters(pts, pair.target.data, log_mass, pair.epsilon)
    return out[0] if single else out


@dataclass(frozen=True)
class SinkhornOperator:
    """Row-stochastic matrix acting on function values at sample points.

    ``direction`` is ``"nu"`` for ``K^nu`` (integrates over the target),
    ``"mu"`` for ``K^mu`` (integrates over the source), or a composition
    such as ``"mu*nu"`` for ``K^mu K^nu``.
    """

    kernel: np.ndarray
    direction: str

    @property
    def shape(self) -> tuple[int, int]:
        return self.kernel.shape

    def row_defect(self) -> float:
        return float(np.max(np.abs(self.kernel.sum(axis=1) - 1.0)))


def sinkhorn_operator(pair: DualPotentialPair, direction: str) -> SinkhornOperator:
    """``K^nu`` (n x m) or ``K^mu`` (m x n) including the empirical weights."""
    lp = _log_plan(pair)
    if direction == "nu":
        return SinkhornOperator(np.exp(lp - np.log(pair.m)), "nu")
    if direction == "mu":
        return SinkhornOperator(np.exp(lp.T - np.log(pair.n)), "mu")
    raise ValidationError(f"direction must be 'mu' or 'nu', got {direction!r}")


def apply(op: SinkhornOperator, h) -> np.ndarray:
    h = np.asarray(h, dtype=float)
    if h.shape[0] != op.kernel.shape[1]:
        raise ValidationError(f"operator takes {op.kernel.shape[1]} values, got {h.shape[0]}")
    return op.kernel @ h


def compose(op_a: SinkhornOperator, op_b: SinkhornOperator) -> SinkhornOperator:
    """The operator ``h -> op_a(op_b(h))``."""
    if op_a.kernel.shape[1] != op_b.kernel.shape[0]:
        raise ValidationError(f"cannot compose {op_a.kernel.shape} with {op_b.kernel.shape}")
    return SinkhornOperator(op_a.kernel @ op_b.kernel, f"{op_a.direction}*{op_b.direction}")


def _matrix(op) -> np.ndarray:
    return op.kernel if isinstance(op, SinkhornOperator) else np.asarray(op, dtype=float)


def spectral_gap(composed) -> float:
    """``1 - |lambda_2|`` for a square Markov matrix.

    Products ``K^nu K^mu`` are self-adjoint in ``L2`` of the empirical source
    measure, and then similar to a symmetric matrix; symmetric inputs use
    ``eigvalsh``.
    """
    k = _matrix(composed)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise ValidationError(f"spectral gap needs a square matrix, got {k.shape}")
    if k.shape[0] == 1:
        return 1.0
    if np.allclose(k, k.T, rtol=0, atol=1e-13):
        lam = np.abs(np.linalg.eigvalsh(0.5 * (k + k.T)))
    else:
        lam = np.abs(np.linalg.eigvals(k))
    lam = np.sort(lam)[::-1]
    return float(1.0 - lam[1])


@dataclass(frozen=True)
class NeumannResult:
    values: np.ndarray
    terms: int
    tail_estimate: float
    gap: float


def neumann_inverse_apply(composed, rhs, terms: int | None = None, tol: float = 1e-8,
                          gap: float | None = None) -> NeumannResult:
    """Partial sums of ``sum_k K^k rhs`` approximating ``(id - K)^{-1} rhs`` on mean-zero vectors.

    Every term is re-centered to remove drift into the constant mode.  With
    ``terms=None`` the sum stops once a term's sup-norm is at most
    ``tol * gap * ||rhs||``.  The neglected remainder is bounded by the
    geometric tail ``tail_estimate = ||last term|| / gap``.
    """
    k = _matrix(composed)
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != (k.shape[1],):
        raise ValidationError(f"rhs has shape {rhs.shape}, operator is {k.shape}")
    if abs(rhs.mean()) > 1e-10 * max(1.0, np.max(np.abs(rhs))):
        raise ValidationError("rhs must have mean zero under the empirical measure")
    if gap is None:
        gap = spectral_gap(k)
    if terms is None and not gap > 0:
        raise ConvergenceError("Neumann series diverges: the operator has no spectral gap", np.inf, 0)
    scale = max(float(np.max(np.abs(rhs))), np.finfo(float).tiny)
    term = rhs.copy()
    total = term.copy()
    count = 1
    limit = terms if terms is not None else 1_000_000
    while count < limit:
        term = k @ term
        term -= term.mean()
        total += term
        count += 1
        if terms is None and np.max(np.abs(term)) <= tol * gap * scale:
            break
    tail = float(np.max(np.abs(term))) / max(gap, np.finfo(float).tiny)
    if terms is None and count >= limit:
        raise ConvergenceError("Neumann series did not reach the requested tolerance", tail, count)
    return NeumannResult(total, count, tail, float(gap))


def limop_predicted_kernel(hessian_fn, epsilon: float, y, y2, nu_density=None) -> float:
    """Limit kernel of ``K^mu K^nu`` against the target measure.

    ``hessian_fn(y)`` returns the Hessian ``H(y)`` of the conjugate Brenier
    potential.  The value is

        (2 pi eps)^{-d/2} sqrt(det H(y2) det H(y) / det(H(y2) + H(y)))
            * exp(-(y - y2)^T H(y2) (y - y2) / (4 eps)),

    divided by ``sqrt(nu(y) nu(y2))`` when a target density is supplied.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    y2 = np.atleast_1d(np.asarray(y2, dtype=float))
    d = y.shape[0]
    h1 = np.atleast_2d(hessian_fn(y2))
    h2 = np.atleast_2d(hessian_fn(y))
    det1 = np.linalg.det(h1)
    det2 = np.linalg.det(h2)
    det12 = np.linalg.det(h1 + h2)
    if min(det1, det2, det12) <= 0:
        raise ValidationError("Hessians must be positive definite")
    diff = y - y2
    val = (2 * np.pi * epsilon) ** (-0.5 * d) * np.sqrt(det1 * det2 / det12)
    val *= np.exp(-diff @ h1 @ diff / (4.0 * epsilon))
    if nu_density is not None:
        val /= np.sqrt(nu_density(y) * nu_density(y2))
    return float(val)


def composition_discrepancy(pair: DualPotentialPair, hessian_fn, nu_density, window: float | None = None) -> float:
    """Relative L1 distance between the empirical ``K^mu K^nu`` kernel and its limit.

    The empirical kernel against ``nu`` is ``m * (K^mu K^nu)_{ab}``; both are
    evaluated on pairs of target samples (restricted to ``|y| <= window`` when
    given) and the discrepancy is ``sum |emp - pred| / sum pred``.
    """
    comp = compose(sinkhorn_operator(pair, "mu"), sinkhorn_operator(pair, "nu"))
    y = pair.target.data
    keep = np.ones(pair.m, dtype=bool) if window is None else np.all(np.abs(y) <= window, axis=1)
    idx = np.flatnonzero(keep)
    emp = pair.m * comp.kernel[np.ix_(idx, idx)]
    yk = y[idx]
    eps = pair.epsilon
    d = y.shape[1]
    hs = np.array([np.atleast_2d(hessian_fn(p)) for p in yk])
    dets = np.linalg.det(hs)
    nu = np.array([nu_density(p) for p in yk])
    pred = np.empty_like(emp)
    for a in range(len(idx)):
        diff = yk - yk[a]
        quad = np.einsum("bi,ij,bj->b", diff, hs[a], diff)
        det_sum = np.linalg.det(hs[a][None] + hs)
        pref = (2 * np.pi * eps) ** (-0.5 * d) * np.sqrt(dets[a] * dets / det_sum)
        pred[a] = pref * np.exp(-quad / (4 * eps)) / np.sqrt(nu[a] * nu)
    return float(np.sum(np.abs(emp - pred)) / np.sum(pred))


def save_pair(pair: DualPotentialPair, path, source_file: str | None = None, target_file: str | None = None) -> None:
    payload = {
        "schema": SCHEMA_VERSION,
        "epsilon": float(pair.epsilon),
        "f_values": [float(v) for v in pair.f_values],
        "g_values": [float(v) for v in pair.g_values],
        "iterations": int(pair.iterations),
        "residual": float(pair.residual),
        "source_file": source_file,
        "target_file": target_file,
    }
    Path(path).write_text(json.dumps(payload, indent=1) + "\n")


def write_matrix_csv(matrix, path) -> None:
    """Dense matrix as headerless CSV at 17 significant digits."""
    with open(path, "w") as fh:
        for row in np.atleast_2d(matrix):
            fh.write(",".join(format(float(v), ".17g") for v in row) + "\n")
