"""Population entropic potentials for Gaussian measures.

Self-transport of ``N(0, A)``: substituting ``f(x) = x^T S x / 2 + c`` into the
population fixed point and integrating the Gaussian gives the matrix map

    S  ->  I - (I - S + eps A^{-1})^{-1},
    c   =  (eps/4) log det(I + A (I - S) / eps).

``S`` commutes with ``A``; per eigenvalue ``a`` of ``A`` and ``b = eps/(2a)`` the
fixed point is ``s = 1 - 1/(sqrt(1+b^2) + b) = b - b^2/2 + b^4/8 + O(b^6)``.

Two-measure transport between centered Gaussians follows the closed form of
Mallasto et al., written there for the kernel ``exp(-||x-y||^2 / eps')``.  All
public functions take the ``exp(-||x-y||^2 / (2 eps))`` convention used by the
solvers, i.e. ``eps' = 2 eps`` internally.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import GaussianModel, _validate_spd
from .errors import ConvergenceError, ValidationError


def _sym_fn(mat: np.ndarray, fn) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (mat + mat.T))
    return (v * fn(w)) @ v.T


def sqrtm_psd(mat: np.ndarray) -> np.ndarray:
    """Principal square root of a symmetric PSD matrix via eigendecomposition."""
    return _sym_fn(mat, lambda w: np.sqrt(np.clip(w, 0.0, None)))


def _spd(a, name="A") -> np.ndarray:
    return _validate_spd(np.atleast_2d(np.asarray(a, dtype=float)), name)


@dataclass(frozen=True)
class QuadraticSelfPotential:
    """``f(x) = x^T S x / 2 + c`` for a centered Gaussian (mean handled by shifting)."""

    epsilon: float
    S: np.ndarray
    c: float
    defect: float = 0.0
    mean: np.ndarray | None = None

    def _centered(self, x):
        x = np.asarray(x, dtype=float)
        return x if self.mean is None else x - self.mean

    def value(self, x):
        z = self._centered(x)
        quad = 0.5 * np.einsum("...i,ij,...j->...", z, self.S, z)
        return quad + self.c

    def gradient(self, x):
        return self._centered(x) @ self.S

    def score(self, x):
        """Population self-OT score ``-(2/eps) grad f``."""
        return -(2.0 / self.epsilon) * self.gradient(x)


def _self_map(S: np.ndarray, eps_prec: np.ndarray) -> np.ndarray:
    d = S.shape[0]
    out = np.eye(d) - np.linalg.inv(np.eye(d) - S + eps_prec)
    return 0.5 * (out + out.T)


def _spectral_fixed_point(A: np.ndarray, epsilon: float) -> np.ndarray:
    def per_eig(a):
        b = epsilon / (2.0 * a)
        r = np.sqrt(1.0 + b * b)
        # s = 1 - 1/(r + b) with the cancellation in r - 1 removed
        return (b + b * b / (r + 1.0)) / (r + b)

    return _sym_fn(A, per_eig)


def solve_self_quadratic(
    A,
    epsilon: float,
    tol: float = 1e-13,
    max_iter: int = 100_000,
    init: str = "spectral",
) -> QuadraticSelfPotential:
    """Exact quadratic self-potential of ``N(0, A)``.

    The matrix map is iterated without damping until its sup-norm defect is
    at most ``tol``.  ``init="spectral"`` starts from the per-eigenvalue
    closed-form root (the iteration then only polishes rounding);
    ``init="zero"`` starts from ``S = 0``, for which the contraction factor is
    about ``1 - eps / (2 lambda_max)``.
    """
    A = _spd(A)
    epsilon = float(epsilon)
    if not epsilon > 0:
        raise ValidationError(f"epsilon must be positive, got {epsilon}")
    d = A.shape[0]
    eps_prec = epsilon * np.linalg.inv(A)
    eps_prec = 0.5 * (eps_prec + eps_prec.T)
    if init == "spectral":
        S = _spectral_fixed_point(A, epsilon)
    elif init == "zero":
        S = np.zeros((d, d))
    else:
        raise ValidationError(f"unknown init {init!r}")
    defect = np.inf
    for _ in range(max_iter):
        S_new = _self_map(S, eps_prec)
        defect = float(np.max(np.abs(S_new - S)))
        S = S_new
        if defect <= tol:
            break
    else:
        raise ConvergenceError("quadratic self-potential map did not converge", defect, max_iter)
    sign, logdet = np.linalg.slogdet(np.eye(d) + A @ (np.eye(d) - S) / epsilon)
    c = 0.25 * epsilon * logdet
    return QuadraticSelfPotential(epsilon, S, float(c), defect)


def taylor_self_potential(A, epsilon: float, s2: float = -0.125) -> QuadraticSelfPotential:
    """Second-order truncation ``S = (eps/2) A^{-1} + s2 eps^2 A^{-2}``.

    The default ``s2 = -1/8`` is the coefficient of the exact expansion; the
    constant is ``c = (eps/4)(log det A - d log eps) + (eps^2/8) tr A^{-1}``.
    """
    A = _spd(A)
    epsilon = float(epsilon)
    d = A.shape[0]
    prec = np.linalg.inv(A)
    S = 0.5 * epsilon * prec + s2 * epsilon**2 * (prec @ prec)
    if epsilon == 0:
        return QuadraticSelfPotential(0.0, np.zeros((d, d)), 0.0)
    _, logdet_a = np.linalg.slogdet(A)
    c = 0.25 * epsilon * (logdet_a - d * np.log(epsilon)) + epsilon**2 / 8 * np.trace(prec)
    return QuadraticSelfPotential(epsilon, 0.5 * (S + S.T), float(c))


def population_self_potential(A, epsilon: float, x, mean=None):
    """``f_eps(x)`` for ``N(mean, A)``."""
    q = solve_self_quadratic(A, epsilon)
    z = np.asarray(x, dtype=float) - (0 if mean is None else np.asarray(mean, dtype=float))
    return q.value(z)


def population_self_score(A, epsilon: float, x, mean=None):
    """Population score ``-(2/eps) S (x - mean)``."""
    q = solve_self_quadratic(A, epsilon)
    z = np.asarray(x, dtype=float) - (0 if mean is None else np.asarray(mean, dtype=float))
    return q.score(z)


def second_order_functional(model: GaussianModel, x):
    """``tr(hess rho / (4 rho) - grad log rho grad log rho^T / 8)`` for a Gaussian.

    With ``g = -A^{-1}(x - m)`` one has ``hess rho / rho = g g^T - A^{-1}``, so the
    value is ``|g|^2 / 8 - tr(A^{-1}) / 4``.
    """
    x = np.asarray(x, dtype=float)
    g = -(x - model.mean) @ model.precision
    return np.sum(g * g, axis=-1) / 8.0 - np.trace(model.precision) / 4.0


@dataclass(frozen=True)
class GaussianEotSolution:
    """Entropic plan between ``N(0, K0)`` and ``N(0, K1)``.

    The plan density against ``N(0,K0) x N(0,K1)`` is
    ``exp(x^T A x + y^T B y + log_norm - ||x-y||^2 / (2 eps))``, so the dual
    potentials are ``f = eps (x^T A x + a)``, ``g = eps (y^T B y + b)`` with
    ``a + b = log_norm``; only the sum is determined.
    """

    epsilon: float
    A_mat: np.ndarray
    B_mat: np.ndarray
    log_norm: float
    K0: np.ndarray
    K1: np.ndarray
    N01: np.ndarray
    N10: np.ndarray
    M: np.ndarray

    def f(self, x, share: float = 0.5):
        x = np.asarray(x, dtype=float)
        return self.epsilon * (np.einsum("...i,ij,...j->...", x, self.A_mat, x) + share * self.log_norm)

    def g(self, y, share: float = 0.5):
        y = np.asarray(y, dtype=float)
        return self.epsilon * (np.einsum("...i,ij,...j->...", y, self.B_mat, y) + (1 - share) * self.log_norm)

    def plan_log_density(self, x, y):
        """Log-density of the plan with respect to Lebesgue measure on ``R^d x R^d``."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        d = self.K0.shape[0]
        lp0 = -0.5 * (d * np.log(2 * np.pi) + np.linalg.slogdet(self.K0)[1]
                      + np.einsum("...i,ij,...j->...", x, np.linalg.inv(self.K0), x))
        lp1 = -0.5 * (d * np.log(2 * np.pi) + np.linalg.slogdet(self.K1)[1]
                      + np.einsum("...i,ij,...j->...", y, np.linalg.inv(self.K1), y))
        diff = x - y
        cost = 0.5 * np.sum(diff * diff, axis=-1)
        return (self.f(x) + self.g(y) - cost) / self.epsilon + lp0 + lp1


def two_measure_closed_form(K0, K1, epsilon: float) -> GaussianEotSolution:
    """Closed-form entropic plan between centered Gaussians (main-text ``epsilon``)."""
    K0 = _spd(K0, "K0")
    K1 = _spd(K1, "K1")
    if K0.shape != K1.shape:
        raise ValidationError("K0 and K1 must have the same shape")
    epsilon = float(epsilon)
    if not epsilon > 0:
        raise ValidationError(f"epsilon must be positive, got {epsilon}")
    e = 2.0 * epsilon  # kernel exp(-||x-y||^2 / e)
    d = K0.shape[0]
    I = np.eye(d)
    r0 = sqrtm_psd(K0)
    r1 = sqrtm_psd(K1)
    r0i = np.linalg.inv(r0)
    r1i = np.linalg.inv(r1)
    N01 = sqrtm_psd(I + 16.0 / e**2 * r0 @ K1 @ r0)
    N10 = sqrtm_psd(I + 16.0 / e**2 * r1 @ K0 @ r1)
    A_mat = 0.25 * r0i @ (I + 4.0 / e * K0 - N01) @ r0i
    B_mat = 0.25 * r1i @ (I + 4.0 / e * K1 - N10) @ r1i
    # (I + 16/e^2 K0 K1)^{1/2} is similar to N01, so det M = det(I + N01)
    M = I + N01
    logdet_m = np.linalg.slogdet(M)[1]
    log_norm = 0.5 * (logdet_m - d * np.log(2.0))
    return GaussianEotSolution(
        epsilon, 0.5 * (A_mat + A_mat.T), 0.5 * (B_mat + B_mat.T), float(log_norm),
        K0, K1, N01, N10, M,
    )


def gaussian_entropic_map(K0, K1, epsilon: float, x) -> np.ndarray:
    """Barycentric projection ``E[Y | X = x]`` of the closed-form Gaussian plan.

    Conditionally on ``x`` the plan is Gaussian in ``y`` with precision
    ``Q = K1^{-1} - 2B + I/eps`` and mean ``Q^{-1} x / eps``.
    """
    sol = two_measure_closed_form(K0, K1, epsilon)
    d = sol.K0.shape[0]
    Q = np.linalg.inv(sol.K1) - 2.0 * sol.B_mat + np.eye(d) / epsilon
    T = np.linalg.inv(epsilon * Q)
    return np.asarray(x, dtype=float) @ T.T


def brenier_map_matrix(K0, K1) -> np.ndarray:
    """Unregularized linear Monge map ``K0^{-1/2} (K0^{1/2} K1 K0^{1/2})^{1/2} K0^{-1/2}``."""
    K0 = _spd(K0, "K0")
    K1 = _spd(K1, "K1")
    r0 = sqrtm_psd(K0)
    r0i = np.linalg.inv(r0)
    return r0i @ sqrtm_psd(r0 @ K1 @ r0) @ r0i
