"""Fit a self-potential, check it against the two-point closed form, and
look at the fixed-point residual as the solver runs."""

from __future__ import annotations

import numpy as np

from selfot import GaussianModel, SampleSet, fit_self_potential, residual, sample

# two points at distance delta: both values equal -(eps/2) log((1 + exp(-delta^2/(2 eps))) / 2)
delta, eps = 1.2, 0.3
pot = fit_self_potential(SampleSet([[0.0], [delta]]), eps, tol=1e-14)
closed = -(eps / 2) * np.log((1 + np.exp(-delta**2 / (2 * eps))) / 2)
print(f"two points: solver {pot.values[0]:.15f}, closed form {closed:.15f}")

# a Gaussian sample at a small regularization
s = sample(GaussianModel.standard(2), 3000, seed=1)
pot = fit_self_potential(s, 0.05)
print(f"n=3000, eps=0.05: {pot.iterations} iterations, residual {residual(pot):.2e}")
