from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from selfot import GaussianModel, SampleSet, SubspaceGaussianModel, log_density, sample, true_score
from selfot.core import density, model_from_dict, read_points_csv, read_samples_csv, stream_seed, write_samples_csv
from selfot.errors import ValidationError


def test_sample_is_deterministic():
    model = GaussianModel(np.zeros(2), np.eye(2))
    a = sample(model, 3, 7).data
    b = sample(model, 3, 7).data
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, sample(model, 3, 8).data)


def test_subspace_samples_lie_in_span():
    model = SubspaceGaussianModel.random(4, [0.5, 1.0, 1.5], seed=3)
    x = sample(model, 100, 1).data
    proj = x @ model.basis @ model.basis.T
    assert np.max(np.linalg.norm(x - proj, axis=1)) <= 1e-10


def test_sample_covariance_large_n():
    cov = np.diag([0.5, 1.0, 1.5])
    x = sample(GaussianModel(np.zeros(3), cov), 100_000, 11).data
    assert np.max(np.abs(np.cov(x, rowvar=False) - cov)) <= 0.05


def test_log_density_constants():
    assert log_density(GaussianModel.standard(1), [0.0]) == pytest.approx(-0.5 * np.log(2 * np.pi), abs=1e-15)
    assert log_density(GaussianModel.centered([[2.0]]), [1.0]) == pytest.approx(-0.5 * np.log(4 * np.pi) - 0.25, abs=1e-14)
    A = np.array([[2.0, 0.3], [0.3, 0.7]])
    expected = -np.log(2 * np.pi) - 0.5 * np.log(np.linalg.det(A))
    assert log_density(GaussianModel.centered(A), [0.0, 0.0]) == pytest.approx(expected, abs=1e-14)


def test_true_score_values():
    np.testing.assert_allclose(true_score(GaussianModel.standard(1), [0.0]), [0.0])
    np.testing.assert_allclose(true_score(GaussianModel.centered([[2.0]]), [1.0]), [-0.5])
    np.testing.assert_allclose(true_score(GaussianModel.centered(np.diag([0.5, 1.0])), [1.0, 1.0]), [-2.0, -1.0])


@given(st.lists(st.floats(-3, 3), min_size=2, max_size=2))
def test_score_is_gradient_of_log_density(x):
    model = GaussianModel([0.2, -0.1], [[1.5, 0.4], [0.4, 0.8]])
    x = np.asarray(x)
    h = 1e-6
    fd = [(log_density(model, x + h * e) - log_density(model, x - h * e)) / (2 * h) for e in np.eye(2)]
    np.testing.assert_allclose(true_score(model, x), fd, atol=1e-6)


def test_batch_and_single_agree():
    model = GaussianModel.standard(2)
    pts = np.array([[0.1, 0.2], [1.0, -1.0]])
    batch = log_density(model, pts)
    assert batch.shape == (2,)
    assert batch[1] == pytest.approx(log_density(model, pts[1]))
    assert density(model, pts[0]) == pytest.approx(np.exp(batch[0]))


def test_subspace_density_and_score():
    model = SubspaceGaussianModel.random(5, [0.5, 1.0, 1.5], seed=0)
    x = sample(model, 4, 2).data
    z = x @ model.basis
    lp = log_density(model, x)
    expected = -0.5 * (3 * np.log(2 * np.pi) + np.log([0.5, 1.0, 1.5]).sum() + np.sum(z**2 / model.variances, axis=1))
    np.testing.assert_allclose(lp, expected, rtol=1e-13)
    s = true_score(model, x)
    np.testing.assert_allclose(s, (-z / model.variances) @ model.basis.T, atol=1e-13)


def test_validation_errors():
    with pytest.raises(ValidationError):
        GaussianModel([0.0], [[-1.0]])
    with pytest.raises(ValidationError):
        GaussianModel([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(ValidationError):
        sample(GaussianModel.standard(1), 0, 1)
    with pytest.raises(ValidationError):
        SampleSet(np.array([[np.nan]]))
    with pytest.raises(ValidationError):
        log_density(GaussianModel.standard(2), [0.0])
    with pytest.raises(ValidationError):
        model_from_dict({"kind": "laplace"})


def test_model_round_trip():
    model = GaussianModel([1.0, 2.0], [[2.0, 0.1], [0.1, 1.0]])
    again = model_from_dict(model.to_dict())
    np.testing.assert_array_equal(again.covariance, model.covariance)
    sub = SubspaceGaussianModel.random(4, [0.5, 1.0], seed=1)
    np.testing.assert_array_equal(model_from_dict(sub.to_dict()).basis, sub.basis)


def test_sample_data_is_read_only():
    s = sample(GaussianModel.standard(1), 5, 0)
    with pytest.raises(ValueError):
        s.data[0, 0] = 1.0


def test_csv_round_trip_is_exact(tmp_path):
    s = sample(GaussianModel.standard(3), 20, 4)
    path = tmp_path / "x.csv"
    write_samples_csv(s, path)
    np.testing.assert_array_equal(read_samples_csv(path).data, s.data)


def test_csv_errors(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("1,2\n3\n")
    with pytest.raises(ValidationError):
        read_points_csv(bad)
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(ValidationError):
        read_points_csv(empty)
    assert read_points_csv(empty, allow_empty=True).size == 0


def test_streams_do_not_collide():
    seeds = {stream_seed(s, k << 32) for s in range(50) for k in range(4)}
    assert len(seeds) == 200
