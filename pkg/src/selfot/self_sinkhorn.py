"""Empirical entropic self-potentials and their off-sample extensions.

The self-potential ``f`` on samples ``X_1..X_n`` solves

    f_i = -eps * log( (1/n) sum_j exp((f_j - 0.5 ||X_i - X_j||^2) / eps) ),

which is iterated with the averaged update ``f <- (f + T(f)) / 2`` starting
from zero.  Convergence is declared on the sup-norm defect ``max |f - T(f)|``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._kernels import AbsorbedKernel, barycenters, half_sq_dists, row_lse, soft_min
from .core import SampleSet, read_samples_csv
from .errors import ConvergenceError, ValidationError

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class SelfPotential:
    """Self-potential values ``f(X_i)`` at the sample points.

    ``residual`` is the fixed-point defect recorded when the potential was
    produced; :func:`residual` recomputes it from ``values``.
    """

    epsilon: float
    values: np.ndarray
    samples: SampleSet
    iterations: int = 0
    residual: float = float("nan")
    tol: float | None = None
    sample_file: str | None = field(default=None, compare=False)

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValidationError(f"epsilon must be positive, got {self.epsilon}")
        values = np.array(self.values, dtype=float).reshape(-1)
        if values.shape[0] != self.samples.n:
            raise ValidationError(f"{values.shape[0]} values for {self.samples.n} samples")
        if not np.all(np.isfinite(values)):
            raise ValidationError("potential values must be finite")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.samples.n

    @property
    def d(self) -> int:
        return self.samples.d

    @property
    def log_mass(self) -> np.ndarray:
        """``log(1/n) + f_j / eps``, the log-weights of the Gaussian windows."""
        return self.values / self.epsilon - np.log(self.n)


def _check_epsilon(epsilon: float) -> float:
    epsilon = float(epsilon)
    if not np.isfinite(epsilon) or epsilon <= 0:
        raise ValidationError(f"epsilon must be a positive real, got {epsilon}")
    return epsilon


def fixed_point_map(values: np.ndarray, cost: np.ndarray, epsilon: float) -> np.ndarray:
    """One application of the self-transport map ``T`` by exact row log-sum-exp."""
    n = values.shape[0]
    m = (values[None, :] - cost) / epsilon
    return -epsilon * (row_lse(m) - np.log(n))


def fit_self_potential(
    samples: SampleSet,
    epsilon: float,
    tol: float = 1e-10,
    max_iter: int = 1000,
    method: str = "absorbed",
) -> SelfPotential:
    """Solve the empirical self-transport fixed point by averaged iteration.

    Parameters
    ----------
    samples : SampleSet
        Data points ``X_1..X_n``.
    epsilon : float
        Regularization, in units of squared length.
    tol : float
        Target sup-norm defect of the fixed-point equation.
    max_iter : int
        Maximum number of averaged updates.
    method : {"absorbed", "lse"}
        ``"lse"`` evaluates every update by a full row log-sum-exp.
        ``"absorbed"`` folds a reference potential into a cached kernel and
        uses matrix-vector products between re-absorptions; both agree to
        rounding but the latter is several times faster.

    Returns
    -------
    SelfPotential
        Values at the samples with ``residual <= tol``.

    Raises
    ------
    ConvergenceError
        If ``max_iter`` updates do not reach ``tol``.
    """
    epsilon = _check_epsilon(epsilon)
    if not tol > 0:
        raise ValidationError(f"tol must be positive, got {tol}")
    if method not in ("absorbed", "lse"):
        raise ValidationError(f"unknown method {method!r}")
    x = samples.data
    n = samples.n
    cost = half_sq_dists(x)
    f = np.zeros(n)
    log_n = np.full(n, -np.log(n))

    if method == "absorbed":
        ker = AbsorbedKernel(cost, epsilon)

        def apply(f):
            ker.absorb(f, f)
            return ker.row_soft_min(f, log_n)

    else:

        def apply(f):
            return fixed_point_map(f, cost, epsilon)

    for it in range(max_iter + 1):
        t = apply(f)
        res = float(np.max(np.abs(f - t)))
        if res <= tol:
            return SelfPotential(epsilon, f, samples, iterations=it, residual=res, tol=tol)
        if it == max_iter:
            break
        f = 0.5 * (f + t)
    raise ConvergenceError("self-potential iteration did not converge", res, max_iter)


def residual(potential: SelfPotential) -> float:
    """Sup-norm defect ``max_i |f_i - T(f)_i|``; zero exactly at a fixed point."""
    x = potential.samples.data
    t = soft_min(x, x, potential.log_mass, potential.epsilon)
    return float(np.max(np.abs(potential.values - t)))


def _points(x, d: int):
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    pts = x.reshape(1, -1) if single else x
    if pts.shape[1] != d:
        raise ValidationError(f"points have dimension {pts.shape[1]}, potential has {d}")
    return pts, single


def extend_potential(potential: SelfPotential, x) -> float | np.ndarray:
    """Off-sample extension ``-eps log((1/n) sum_j exp((f_j - 0.5||x - X_j||^2)/eps))``."""
    pts, single = _points(x, potential.d)
    out = soft_min(pts, potential.samples.data, potential.log_mass, potential.epsilon)
    return float(out[0]) if single else out


def barycentric_projection(potential: SelfPotential, x) -> np.ndarray:
    """Barycenter of the samples under the entropic self-plan conditioned at ``x``."""
    pts, single = _points(x, potential.d)
    out = barycenters(pts, potential.samples.data, potential.log_mass, potential.epsilon)
    return out[0] if single else out


def potential_gradient(potential: SelfPotential, x) -> np.ndarray:
    """Gradient ``x - B(x)`` of the extended potential."""
    pts, single = _points(x, potential.d)
    out = pts - barycenters(pts, potential.samples.data, potential.log_mass, potential.epsilon)
    return out[0] if single else out


def self_plan_matrix(potential: SelfPotential) -> np.ndarray:
    """Discrete self-plan ``(1/n^2) exp((f_i + f_j - 0.5||X_i - X_j||^2)/eps)``."""
    f = potential.values
    cost = half_sq_dists(potential.samples.data)
    return np.exp((f[:, None] + f[None, :] - cost) / potential.epsilon - 2 * np.log(potential.n))


def save_potential(potential: SelfPotential, path, sample_file: str | None = None) -> None:
    """Write ``{"schema", "epsilon", "values", "iterations", "residual", "sample_file"}``."""
    sample_file = sample_file if sample_file is not None else potential.sample_file
    payload = {
        "schema": SCHEMA_VERSION,
        "epsilon": float(potential.epsilon),
        "values": [float(v) for v in potential.values],
        "iterations": int(potential.iterations),
        "residual": float(potential.residual),
        "sample_file": None if sample_file is None else str(sample_file),
    }
    Path(path).write_text(json.dumps(payload, indent=1) + "\n")


def load_potential(path, samples: SampleSet | None = None) -> SelfPotential:
    """Read a potential; ``sample_file`` is resolved relative to the JSON file."""
    path = Path(path)
    payload = json.loads(path.read_text())
    if payload.get("schema", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise ValidationError(f"{path}: unsupported schema {payload.get('schema')}")
    for key in ("epsilon", "values"):
        if key not in payload:
            raise ValidationError(f"{path}: missing field {key!r}")
    if samples is None:
        sample_file = payload.get("sample_file")
        if not sample_file:
            raise ValidationError(f"{path}: no sample_file recorded and no samples given")
        sp = Path(sample_file)
        if not sp.is_absolute():
            sp = path.parent / sp
        samples = read_samples_csv(sp)
    return SelfPotential(
        float(payload["epsilon"]),
        np.asarray(payload["values"], dtype=float),
        samples,
        iterations=int(payload.get("iterations", 0)),
        residual=float(payload.get("residual", float("nan"))),
        sample_file=payload.get("sample_file"),
    )
