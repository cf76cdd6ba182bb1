"""Domain types, exact Gaussian models, sampling and density/score evaluation.

Subspace models carry a density with respect to the k-dimensional Hausdorff
measure on ``span(basis)``.  Points off the subspace are orthogonally
projected before evaluation, so ``log_density`` and ``true_score`` are defined
everywhere but only meaningful on the subspace.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

from .errors import ValidationError

SYMMETRY_TOL = 1e-12
ORTHONORMAL_TOL = 1e-10


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


def stream_seed(seed: int, stream: int) -> int:
    """Seed of an independent random stream derived from a master seed."""
    return int(seed) ^ int(stream)


@dataclass(frozen=True)
class SampleSet:
    """``n`` points in ``R^d`` with their provenance."""

    data: np.ndarray
    seed: int | None = None
    model: str | None = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim == 1:
            data = data[:, None]
        if data.ndim != 2:
            raise ValidationError(f"sample data must be an n x d matrix, got shape {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ValidationError(f"need n >= 1 and d >= 1, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValidationError("sample data contains non-finite entries")
        object.__setattr__(self, "data", _frozen(data))

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    def __len__(self) -> int:
        return self.n


def _validate_spd(cov: np.ndarray, name: str = "covariance") -> np.ndarray:
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ValidationError(f"{name} must be square, got shape {cov.shape}")
    if not np.all(np.isfinite(cov)):
        raise ValidationError(f"{name} contains non-finite entries")
    if np.max(np.abs(cov - cov.T)) > SYMMETRY_TOL * max(1.0, np.max(np.abs(cov))):
        raise ValidationError(f"{name} is not symmetric")
    if np.linalg.eigvalsh(cov).min() <= 0:
        raise ValidationError(f"{name} is not positive definite")
    return cov


@dataclass(frozen=True)
class GaussianModel:
    """Full-dimensional Gaussian ``N(mean, covariance)``."""

    mean: np.ndarray
    covariance: np.ndarray
    _chol: np.ndarray = field(init=False, repr=False, compare=False)
    _precision: np.ndarray = field(init=False, repr=False, compare=False)
    _logdet: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        cov = _validate_spd(self.covariance)
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        if mean.shape != (cov.shape[0],):
            raise ValidationError(f"mean has shape {mean.shape}, covariance is {cov.shape}")
        object.__setattr__(self, "covariance", _frozen(cov))
        object.__setattr__(self, "mean", _frozen(mean))
        chol = np.linalg.cholesky(cov)
        object.__setattr__(self, "_chol", _frozen(chol))
        object.__setattr__(self, "_precision", _frozen(np.linalg.inv(cov)))
        object.__setattr__(self, "_logdet", float(2.0 * np.log(np.diag(chol)).sum()))

    @classmethod
    def standard(cls, d: int = 1) -> "GaussianModel":
        return cls(np.zeros(d), np.eye(d))

    @classmethod
    def centered(cls, covariance) -> "GaussianModel":
        cov = np.atleast_2d(np.asarray(covariance, dtype=float))
        return cls(np.zeros(cov.shape[0]), cov)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def precision(self) -> np.ndarray:
        return self._precision

    def describe(self) -> str:
        return f"gaussian(d={self.dim})"

    def to_dict(self) -> dict:
        return {"kind": "gaussian", "mean": self.mean.tolist(), "covariance": self.covariance.tolist()}


@dataclass(frozen=True)
class SubspaceGaussianModel:
    """Centered Gaussian concentrated on a k-dimensional linear subspace of ``R^d``.

    ``basis`` is a ``d x k`` matrix with orthonormal columns and ``variances``
    the diagonal of the intrinsic covariance in that basis.
    """

    basis: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        basis = np.atleast_2d(np.asarray(self.basis, dtype=float))
        variances = np.atleast_1d(np.asarray(self.variances, dtype=float))
        if basis.ndim != 2 or basis.shape[1] > basis.shape[0]:
            raise ValidationError(f"basis must be d x k with k <= d, got shape {basis.shape}")
        if variances.shape != (basis.shape[1],):
            raise ValidationError("need one variance per basis column")
        if not np.all(np.isfinite(basis)) or not np.all(np.isfinite(variances)):
            raise ValidationError("non-finite model parameters")
        if np.any(variances <= 0):
            raise ValidationError("variances must be positive")
        gram = basis.T @ basis
        if np.max(np.abs(gram - np.eye(basis.shape[1]))) > ORTHONORMAL_TOL:
            raise ValidationError("basis columns are not orthonormal")
        object.__setattr__(self, "basis", _frozen(basis))
        object.__setattr__(self, "variances", _frozen(variances))

    @classmethod
    def random(cls, ambient_dim: int, variances, seed: int = 0) -> "SubspaceGaussianModel":
        """Subspace spanned by a random orthonormal frame (QR of a Gaussian matrix)."""
        variances = np.atleast_1d(np.asarray(variances, dtype=float))
        k = variances.shape[0]
        if k > ambient_dim:
            raise ValidationError("intrinsic dimension exceeds ambient dimension")
        rng = np.random.default_rng(seed)
        q, r = np.linalg.qr(rng.standard_normal((ambient_dim, k)))
        q = q * np.sign(np.diag(r))
        return cls(q, variances)

    @property
    def ambient_dim(self) -> int:
        return self.basis.shape[0]

    @property
    def intrinsic_dim(self) -> int:
        return self.basis.shape[1]

    @property
    def dim(self) -> int:
        return self.ambient_dim

    def project(self, x: np.ndarray) -> np.ndarray:
        """Intrinsic coordinates ``basis^T x`` of (the projection of) ``x``."""
        return np.asarray(x, dtype=float) @ self.basis

    def describe(self) -> str:
        return f"subspace_gaussian(d={self.ambient_dim}, k={self.intrinsic_dim})"

    def to_dict(self) -> dict:
        return {"kind": "subspace_gaussian", "basis": self.basis.tolist(), "variances": self.variances.tolist()}


Model = Union[GaussianModel, SubspaceGaussianModel]


def model_from_dict(payload: dict) -> Model:
    kind = payload.get("kind")
    if kind == "gaussian":
        return GaussianModel(payload["mean"], payload["covariance"])
    if kind == "subspace_gaussian":
        return SubspaceGaussianModel(payload["basis"], payload["variances"])
    raise ValidationError(f"unknown model kind {kind!r}")


def sample(model: Model, n: int, seed: int) -> SampleSet:
    """Draw ``n`` i.i.d. points; deterministic for a fixed seed."""
    if int(n) < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    if isinstance(model, GaussianModel):
        z = rng.standard_normal((int(n), model.dim))
        data = model.mean + z @ model._chol.T
    elif isinstance(model, SubspaceGaussianModel):
        z = rng.standard_normal((int(n), model.intrinsic_dim)) * np.sqrt(model.variances)
        data = z @ model.basis.T
    else:
        raise ValidationError(f"unsupported model type {type(model).__name__}")
    return SampleSet(data, seed=int(seed), model=model.describe())


def _as_points(x, d: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    pts = np.atleast_2d(x) if x.ndim == 1 else (x.reshape(1, 1) if x.ndim == 0 else x)
    if pts.shape[-1] != d:
        raise ValidationError(f"points have dimension {pts.shape[-1]}, model has {d}")
    return pts, single


def log_density(model: Model, x) -> float | np.ndarray:
    """Exact Gaussian log-density at one point (d-vector) or a batch (m x d)."""
    pts, single = _as_points(x, model.dim)
    if isinstance(model, GaussianModel):
        diff = pts - model.mean
        quad = np.einsum("ij,jk,ik->i", diff, model.precision, diff)
        out = -0.5 * (model.dim * np.log(2 * np.pi) + model._logdet + quad)
    else:
        z = model.project(pts)
        k = model.intrinsic_dim
        quad = np.sum(z**2 / model.variances, axis=1)
        out = -0.5 * (k * np.log(2 * np.pi) + np.log(model.variances).sum() + quad)
    return float(out[0]) if single else out


def density(model: Model, x) -> float | np.ndarray:
    return np.exp(log_density(model, x))


def true_score(model: Model, x) -> np.ndarray:
    """Gradient of the log-density, ``-A^{-1}(x - mean)`` for full Gaussians."""
    pts, single = _as_points(x, model.dim)
    if isinstance(model, GaussianModel):
        out = -(pts - model.mean) @ model.precision
    else:
        z = model.project(pts)
        out = (-z / model.variances) @ model.basis.T
    return out[0] if single else out


def write_samples_csv(samples: SampleSet | np.ndarray, path) -> None:
    """Headerless comma-separated rows at 17 significant digits."""
    data = samples.data if isinstance(samples, SampleSet) else np.atleast_2d(samples)
    with open(path, "w") as fh:
        for row in data:
            fh.write(",".join(format(float(v), ".17g") for v in row) + "\n")


def read_points_csv(path, allow_empty: bool = False) -> np.ndarray:
    """Read a headerless CSV of points as an ``m x d`` array."""
    path = Path(path)
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append([float(tok) for tok in line.split(",")])
            except ValueError as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        if allow_empty:
            return np.empty((0, 0))
        raise ValidationError(f"{path}: no data rows")
    if len({len(r) for r in rows}) != 1:
        raise ValidationError(f"{path}: rows have inconsistent lengths")
    return np.array(rows, dtype=float)


def read_samples_csv(path, seed: int | None = None) -> SampleSet:
    return SampleSet(read_points_csv(path), seed=seed, model=f"file:{Path(path).name}")
