from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import brute_force_self_potential, two_point_value
from selfot import (
    GaussianModel,
    SampleSet,
    barycentric_projection,
    extend_potential,
    fit_self_potential,
    potential_gradient,
    residual,
    sample,
)
from selfot.errors import ConvergenceError, ValidationError
from selfot.self_sinkhorn import SelfPotential, load_potential, save_potential, self_plan_matrix


def _pair(delta, d=1):
    x = np.zeros((2, d))
    x[1, 0] = delta
    return SampleSet(x)


def test_single_point_potential_is_zero():
    pot = fit_self_potential(SampleSet([[1.3, -0.2]]), 0.4)
    np.testing.assert_array_equal(pot.values, [0.0])
    assert residual(pot) == 0.0


@pytest.mark.parametrize("delta,eps", [(0.3, 0.05), (1.0, 0.5), (2.0, 1.0), (4.0, 0.1)])
@pytest.mark.parametrize("method", ["absorbed", "lse"])
def test_two_point_closed_form(delta, eps, method):
    pot = fit_self_potential(_pair(delta), eps, tol=1e-14, method=method)
    np.testing.assert_allclose(pot.values, two_point_value(delta, eps), atol=1e-12)


def test_three_points_match_brute_force():
    x = np.array([[0.0, 0.0], [1.0, 0.2], [-0.4, 0.9]])
    pot = fit_self_potential(SampleSet(x), 0.5, tol=1e-14)
    np.testing.assert_allclose(pot.values, brute_force_self_potential(x, 0.5), atol=1e-10)


def test_residual_of_zero_potential_on_separated_pair():
    delta, eps = 3.0, 0.1
    pot = SelfPotential(eps, np.zeros(2), _pair(delta))
    assert residual(pot) == pytest.approx(abs(eps * np.log(0.5 * (1 + np.exp(-delta**2 / (2 * eps))))), rel=1e-12)


def test_converged_residual_below_tol():
    s = sample(GaussianModel.standard(2), 300, 5)
    pot = fit_self_potential(s, 0.2, tol=1e-10)
    assert pot.residual <= 1e-10
    assert residual(pot) <= 1e-10 * 1.01


def test_methods_agree():
    s = sample(GaussianModel.standard(1), 500, 2)
    a = fit_self_potential(s, 0.05, tol=1e-12, method="absorbed")
    b = fit_self_potential(s, 0.05, tol=1e-12, method="lse")
    np.testing.assert_allclose(a.values, b.values, atol=1e-10)


def test_small_epsilon_does_not_overflow():
    s = sample(GaussianModel.standard(1), 200, 9)
    pot = fit_self_potential(s, 1e-3, tol=1e-10, max_iter=5000)
    assert np.all(np.isfinite(pot.values))


def test_nonconvergence_raises():
    s = sample(GaussianModel.standard(1), 100, 1)
    with pytest.raises(ConvergenceError) as info:
        fit_self_potential(s, 0.001, max_iter=2)
    assert info.value.iterations == 2


@pytest.mark.parametrize("bad", [0.0, -1.0, np.nan, np.inf])
def test_bad_epsilon(bad):
    with pytest.raises(ValidationError):
        fit_self_potential(_pair(1.0), bad)


def test_extension_interpolates_samples():
    s = sample(GaussianModel.standard(2), 200, 3)
    pot = fit_self_potential(s, 0.3, tol=1e-12)
    np.testing.assert_allclose(extend_potential(pot, s.data), pot.values, atol=1e-11)


def test_single_atom_extension_gradient_projection():
    x1 = np.array([0.5, -1.0])
    pot = fit_self_potential(SampleSet([x1]), 0.7)
    x = np.array([2.0, 0.3])
    assert extend_potential(pot, x) == pytest.approx(0.5 * np.sum((x - x1) ** 2))
    np.testing.assert_allclose(potential_gradient(pot, x), x - x1)
    np.testing.assert_allclose(barycentric_projection(pot, x), x1)


def test_midpoint_of_symmetric_pair():
    delta, eps = 1.5, 0.3
    pot = fit_self_potential(_pair(delta, 2), eps, tol=1e-14)
    mid = np.array([delta / 2, 0.0])
    f = two_point_value(delta, eps)
    assert extend_potential(pot, mid) == pytest.approx(-f + delta**2 / 8, abs=1e-12)
    assert abs(potential_gradient(pot, mid)[0]) <= 1e-12


@given(arrays(float, (4, 2), elements=st.floats(-2, 2)))
def test_gradient_matches_finite_differences(x):
    s = sample(GaussianModel.standard(2), 40, 21)
    pot = fit_self_potential(s, 0.25, tol=1e-12)
    h = 1e-5
    for pt in x:
        fd = [(extend_potential(pot, pt + h * e) - extend_potential(pot, pt - h * e)) / (2 * h) for e in np.eye(2)]
        np.testing.assert_allclose(potential_gradient(pot, pt), fd, atol=1e-6)


@given(arrays(float, (5, 3), elements=st.floats(-4, 4)))
def test_projection_plus_gradient_is_identity(x):
    s = sample(GaussianModel.standard(3), 30, 8)
    pot = fit_self_potential(s, 0.5, tol=1e-10)
    np.testing.assert_allclose(barycentric_projection(pot, x) + potential_gradient(pot, x), x, atol=1e-12)


@given(st.integers(0, 10_000), st.floats(0.05, 1.0))
def test_plan_is_bistochastic(seed, eps):
    s = sample(GaussianModel.standard(1), 25, seed)
    pot = fit_self_potential(s, eps, tol=1e-12)
    P = self_plan_matrix(pot)
    np.testing.assert_allclose(P.sum(axis=0), 1 / 25, atol=1e-11)
    np.testing.assert_allclose(P, P.T, atol=1e-16)


@given(st.integers(0, 10_000), st.floats(-5, 5))
def test_translation_equivariance(seed, shift):
    s = sample(GaussianModel.standard(2), 20, seed)
    a = fit_self_potential(s, 0.3, tol=1e-12)
    b = fit_self_potential(SampleSet(s.data + shift), 0.3, tol=1e-12)
    np.testing.assert_allclose(a.values, b.values, atol=1e-10)


def test_barycenter_at_origin_is_small():
    s = sample(GaussianModel.standard(1), 2000, 12)
    pot = fit_self_potential(s, 0.1)
    assert np.linalg.norm(barycentric_projection(pot, [0.0])) <= 0.1


def test_save_load_round_trip(tmp_path):
    from selfot.core import write_samples_csv

    s = sample(GaussianModel.standard(2), 50, 0)
    write_samples_csv(s, tmp_path / "s.csv")
    pot = fit_self_potential(s, 0.2)
    save_potential(pot, tmp_path / "p.json", sample_file="s.csv")
    payload = json.loads((tmp_path / "p.json").read_text())
    assert payload["schema"] == 1
    again = load_potential(tmp_path / "p.json")
    np.testing.assert_array_equal(again.values, pot.values)
    assert abs(residual(again) - pot.residual) <= 1e-12
