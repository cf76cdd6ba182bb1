from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from selfot import GaussianModel, SampleSet, fit_self_potential, sample
from selfot.errors import ValidationError
from selfot.score import (
    ScoreField,
    kde_score,
    mc_l2_error,
    population_bias_l2,
    self_ot_score,
    weighted_sqrt_density_estimate,
)
from selfot.self_sinkhorn import SelfPotential


def test_single_atom_scores():
    x1 = np.array([0.3, -0.7])
    eps = 0.4
    pot = fit_self_potential(SampleSet([x1]), eps)
    x = np.array([1.0, 1.0])
    np.testing.assert_allclose(self_ot_score(pot, x), (2 / eps) * (x1 - x))
    np.testing.assert_allclose(kde_score(pot.samples, eps, x), (1 / eps) * (x1 - x))


@given(st.integers(0, 1000), st.floats(-1e3, 1e3))
def test_constant_potential_gives_twice_kde(seed, level):
    s = sample(GaussianModel.standard(2), 15, seed)
    pot = SelfPotential(0.3, np.full(15, level), s)
    x = np.array([[0.1, 0.2], [-1.5, 2.0]])
    np.testing.assert_allclose(self_ot_score(pot, x), 2 * kde_score(s, 0.3, x), rtol=1e-12, atol=1e-12)


def test_self_and_kde_differ_for_fitted_potential():
    s = sample(GaussianModel.standard(1), 100, 0)
    pot = fit_self_potential(s, 0.2)
    x = np.linspace(-1, 1, 5)[:, None]
    assert np.max(np.abs(self_ot_score(pot, x) - 2 * kde_score(s, 0.2, x))) > 1e-3


def test_self_ot_score_at_origin():
    s = sample(GaussianModel.standard(1), 4000, 10)
    pot = fit_self_potential(s, 0.2)
    assert abs(self_ot_score(pot, [0.0])[0]) <= 0.15


def test_kde_score_at_one():
    s = sample(GaussianModel.standard(1), 4000, 10)
    assert abs(kde_score(s, 0.2, [1.0])[0] + 1.0) <= 0.3


def test_weighted_sqrt_density_single_atom():
    model = GaussianModel.standard(2)
    x = np.array([0.4, -0.3])
    eps = 0.25
    got = weighted_sqrt_density_estimate(SampleSet([x]), eps, model, x)
    from selfot.core import density

    assert got == pytest.approx((2 * np.pi * eps) ** -1 * density(model, x) ** -0.5, rel=1e-13)


def test_weighted_sqrt_density_approximates_root_density():
    model = GaussianModel.standard(1)
    s = sample(model, 8000, 3)
    got = weighted_sqrt_density_estimate(s, 0.1, model, [0.0])
    target = (2 * np.pi) ** -0.25
    assert abs(got / target - 1) <= 0.10


def test_mc_l2_error_identities():
    model = GaussianModel.standard(1)
    z = sample(model, 1000, 4)
    truth = ScoreField.exact(model)
    assert mc_l2_error(truth, truth, z) == 0.0
    c = 0.7
    assert mc_l2_error(lambda x: truth(x) + c, truth, z) == pytest.approx(c * c, rel=1e-12)


def test_mc_l2_error_against_closed_form():
    z = sample(GaussianModel.standard(1), 50_000, 5)
    est = ScoreField.exact(GaussianModel.centered([[2.0]]))
    truth = ScoreField.exact(GaussianModel.standard(1))
    assert mc_l2_error(est, truth, z) == pytest.approx(0.25, abs=0.01)


def test_mc_l2_error_order_independent():
    z = sample(GaussianModel.standard(2), 999, 6)
    est = ScoreField.exact(GaussianModel.centered(np.diag([2.0, 0.5])))
    truth = ScoreField.exact(GaussianModel.standard(2))
    rev = SampleSet(z.data[::-1].copy())
    assert mc_l2_error(est, truth, z) == mc_l2_error(est, truth, rev)


def test_score_field_dispatch():
    s = sample(GaussianModel.standard(3), 40, 1)
    pot = fit_self_potential(s, 0.5)
    x = np.zeros((2, 3))
    np.testing.assert_array_equal(ScoreField.self_ot(pot)(x), self_ot_score(pot, x))
    np.testing.assert_array_equal(ScoreField.kde(s, 0.5)(x), kde_score(s, 0.5, x))
    assert ScoreField.self_ot(pot).dim == ScoreField.exact(GaussianModel.standard(3)).dim == 3
    with pytest.raises(ValidationError):
        ScoreField("spline", None)
    with pytest.raises(ValidationError):
        kde_score(s, 0.5, np.zeros(2))


def test_population_bias_scales_like_eps_squared():
    model = GaussianModel.centered(np.diag([0.5, 1.5]))
    b1 = population_bias_l2(model, 0.02)
    b2 = population_bias_l2(model, 0.01)
    assert b1 / b2 == pytest.approx(4.0, rel=0.01)


def test_population_bias_against_quadrature():
    from scipy import integrate

    from selfot.gaussian_oracle import population_self_score

    eps = 0.3
    model = GaussianModel.centered([[2.0]])
    f = lambda x: (population_self_score([[2.0]], eps, [x])[0] + x / 2) ** 2 * np.exp(-x * x / 4) / np.sqrt(4 * np.pi)
    val, _ = integrate.quad(f, -np.inf, np.inf, epsabs=1e-14)
    assert population_bias_l2(model, eps) == pytest.approx(val, rel=1e-9)
