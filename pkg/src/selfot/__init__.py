"""Entropic optimal self-transport: potentials, score estimation and limit theory."""

from __future__ import annotations

__version__ = "0.1.0"

from .core import GaussianModel, SampleSet, SubspaceGaussianModel, log_density, sample, true_score
from .errors import ConvergenceError, ValidationError
from .self_sinkhorn import (
    SelfPotential,
    barycentric_projection,
    extend_potential,
    fit_self_potential,
    potential_gradient,
    residual,
)

__all__ = [
    "__version__",
    "ConvergenceError",
    "GaussianModel",
    "SampleSet",
    "SelfPotential",
    "SubspaceGaussianModel",
    "ValidationError",
    "barycentric_projection",
    "extend_potential",
    "fit_self_potential",
    "log_density",
    "potential_gradient",
    "residual",
    "sample",
    "true_score",
]
