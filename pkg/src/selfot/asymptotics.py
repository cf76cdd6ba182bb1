"""Constants and regularization schedules from the limit theory of self-potentials.

The CLT constant is the double series

    C3 = sum_{k,k' >= 0} 2^{-k-k'} sum_{j<=k, j'<=k'} C(k,j) C(k',j') (-1)^{j+j'} (j+j'+2)^{-d/2}.

Writing ``(j+j'+2)^{-s} = Gamma(s)^{-1} int t^{s-1} e^{-(j+j'+2)t} dt`` with
``s = d/2`` collapses the inner sums to binomial expansions of
``(1 - e^{-t})^{k+k'}``, so the inner sum depends on ``m = k+k'`` only:

    a_m = Gamma(s)^{-1} int_0^inf t^{s-1} e^{-2t} (1 - e^{-t})^m dt.

Summing the outer geometric weights in closed form gives the one-dimensional
integral used by :func:`c3_quadrature`,

    C3 = 4 Gamma(s)^{-1} int_0^inf t^{s-1} e^{-2t} / (1 + e^{-t})^2 dt,

evaluated after ``t = v^2`` to remove the endpoint singularity for odd ``d``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .errors import ConvergenceError, ValidationError

# naive alternating binomial sums lose all digits a little past this order
NAIVE_MAX_ORDER = 30


@dataclass(frozen=True)
class C3Value:
    dim: int
    value: float
    method: str
    truncation: int | None = None
    est_error: float = 0.0

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "value": self.value,
            "method": self.method,
            "truncation": self.truncation,
            "est_error": self.est_error,
        }


def _check_dim(d) -> int:
    if int(d) != d or int(d) < 1:
        raise ValidationError(f"dimension must be a positive integer, got {d}")
    return int(d)


def inner_sum_naive(m: int, d: int) -> float:
    """``sum_j C(m,j) (-1)^j (j+2)^{-d/2}`` summed term by term in floating point."""
    if m > NAIVE_MAX_ORDER:
        raise ValidationError(
            f"naive inner summation is unstable for order {m} > {NAIVE_MAX_ORDER}; use inner='integral'"
        )
    s = 0.5 * d
    return math.fsum((-1) ** j * math.comb(m, j) * (j + 2.0) ** (-s) for j in range(m + 1))


def inner_sum_integral(m: int, d: int, tol: float = 1e-13) -> tuple[float, float]:
    """``a_m`` by quadrature of its Gamma-integral form; returns ``(value, abserr)``."""
    s = 0.5 * d
    # t = v^2: a_m = 2/Gamma(s) int v^{d-1} e^{-2v^2} (1 - e^{-v^2})^m dv
    log_norm = math.log(2.0) - special.gammaln(s)

    def integrand(v):
        if v == 0.0:
            return 0.0 if (d > 1 or m > 0) else math.exp(log_norm)
        w = -math.expm1(-v * v)
        return math.exp(log_norm + (d - 1) * math.log(v) - 2 * v * v + m * math.log(w))

    # the integrand peaks near v^2 = log(1 + m/2)
    peak = math.sqrt(math.log1p(0.5 * m) + 0.5)
    val1, err1 = integrate.quad(integrand, 0.0, peak, epsabs=1e-2 * tol, epsrel=tol, limit=200)
    val2, err2 = integrate.quad(integrand, peak, np.inf, epsabs=1e-2 * tol, epsrel=tol, limit=200)
    return val1 + val2, err1 + err2


def c3_series(d: int, K: int = 60, inner: str = "integral") -> C3Value:
    """Partial sum of the C3 double series over ``0 <= k, k' <= K``.

    Parameters
    ----------
    d : int
        Dimension.
    K : int
        Truncation of both outer indices.
    inner : {"integral", "naive"}
        How the alternating inner sums are evaluated.  ``"naive"`` is exact
        summation in floating point and is refused past order 30.

    Returns
    -------
    C3Value
        ``est_error`` bounds the neglected outer weights times the largest
        inner sum, plus the accumulated quadrature error.
    """
    d = _check_dim(d)
    if int(K) != K or K < 0:
        raise ValidationError(f"truncation must be a nonnegative integer, got {K}")
    K = int(K)
    if inner not in ("integral", "naive"):
        raise ValidationError(f"unknown inner scheme {inner!r}")
    terms = []
    quad_err = 0.0
    a0 = 2.0 ** (-0.5 * d)
    for m in range(2 * K + 1):
        count = min(m, 2 * K - m) + 1
        if m == 0:
            a = a0
        elif inner == "naive":
            a = inner_sum_naive(m, d)
        else:
            a, err = inner_sum_integral(m, d)
            quad_err += count * 2.0 ** (-m) * err
        terms.append(count * 2.0 ** (-m) * a)
    outer = 2.0 - 2.0 ** (-K)
    tail = (4.0 - outer * outer) * a0
    return C3Value(d, math.fsum(terms), "series", K, tail + quad_err)


def c3_quadrature(d: int, tol: float = 1e-12) -> C3Value:
    """C3 from its one-dimensional integral representation (adaptive quadrature)."""
    d = _check_dim(d)
    s = 0.5 * d
    log_norm = math.log(8.0) - special.gammaln(s)

    def integrand(v):
        u = math.exp(-v * v)
        if v == 0.0:
            return math.exp(log_norm) / 4.0 if d == 1 else 0.0
        return math.exp(log_norm + (d - 1) * math.log(v)) * u * u / (1.0 + u) ** 2

    val, err = integrate.quad(integrand, 0.0, np.inf, epsabs=tol, epsrel=tol, limit=400, full_output=0)
    if not np.isfinite(val) or err > 100 * max(tol, tol * abs(val)):
        raise ConvergenceError("C3 quadrature did not reach the requested tolerance", err, 0)
    return C3Value(d, float(val), "quadrature", None, float(err))


def kernel_second_moment(d: int, k: int = 1) -> float:
    """Second moment ``2^{-d} (pi k)^{-d/2}`` of the rescaled windows; independent of eps."""
    d = _check_dim(d)
    if int(k) != k or k < 1:
        raise ValidationError(f"k must be a positive integer, got {k}")
    return 2.0 ** (-d) * (math.pi * k) ** (-0.5 * d)


def predicted_potential_variance(c3: C3Value, rho_x: float) -> float:
    """Limit variance ``C3 / rho(x)`` of ``sqrt(n) eps^{d/4 - 1} (f_hat(x) - f(x))``."""
    if not rho_x > 0:
        raise ValidationError(f"density must be positive, got {rho_x}")
    return c3.value / float(rho_x)


def kernel_normalized_variance(c3: C3Value, rho_x: float) -> float:
    """``C3 / (4 (2 pi)^{d/2} rho(x))``: the prediction with the window normalization kept.

    Expanding the fluctuation as ``-(eps/2) (id + K)^{-1}`` applied to a
    centered empirical average of windows ``exp(-|x-y|^2/(2 eps)) /
    ((2 pi eps)^{d/2} sqrt(rho))``, the series for its variance is ``C3``
    times ``(2 pi)^{-d/2} / 4``.  Reported next to the plain ``C3 / rho`` as a
    diagnostic.
    """
    d = c3.dim
    return c3.value / (4.0 * (2 * math.pi) ** (0.5 * d) * float(rho_x))


def bandwidth_rule(n: int, d: int) -> float:
    """``n^{-1/(d+4)}``, the schedule balancing bias and fluctuation."""
    d = _check_dim(d)
    if n < 2:
        raise ValidationError(f"need n >= 2, got {n}")
    return float(n) ** (-1.0 / (d + 4))


def theoretical_rate(d: int) -> float:
    """Exponent ``2/(d+4)`` of the mean squared L2 error."""
    d = _check_dim(d)
    return 2.0 / (d + 4)


def clt_epsilon_rule(n: int, d: int, slack: float = 0.5) -> float:
    """Solve ``sqrt(n) eps^{d/4} = (log n)^{1/2 + slack}`` for ``eps``."""
    d = _check_dim(d)
    if n < 2:
        raise ValidationError(f"need n >= 2, got {n}")
    return ((math.log(n) ** (0.5 + slack)) / math.sqrt(n)) ** (4.0 / d)


def score_clt_epsilon_rule(n: int, d: int) -> float:
    """``n^{-2/(d+8)} / log n``, inside the regime where the score CLT is centered."""
    d = _check_dim(d)
    if n < 2:
        raise ValidationError(f"need n >= 2, got {n}")
    return float(n) ** (-2.0 / (d + 8)) / math.log(n)
