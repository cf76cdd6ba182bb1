from __future__ import annotations

import math

import mpmath as mp
import numpy as np
import pytest
from scipy import integrate

from selfot.asymptotics import (
    NAIVE_MAX_ORDER,
    bandwidth_rule,
    c3_quadrature,
    c3_series,
    clt_epsilon_rule,
    inner_sum_integral,
    inner_sum_naive,
    kernel_normalized_variance,
    kernel_second_moment,
    predicted_potential_variance,
    score_clt_epsilon_rule,
    theoretical_rate,
)
from selfot.errors import ValidationError

mp.mp.dps = 60


def _mp_inner(m, d):
    s = mp.mpf(d) / 2
    return mp.fsum((-1) ** j * mp.binomial(m, j) * mp.power(j + 2, -s) for j in range(m + 1))


def _mp_series(d, K):
    """Double series in high precision through the order-m inner sums."""
    a = [_mp_inner(m, d) for m in range(2 * K + 1)]
    return mp.fsum(mp.power(2, -(k + kp)) * a[k + kp] for k in range(K + 1) for kp in range(K + 1))


def _mp_double_series_direct(d, K):
    s = mp.mpf(d) / 2
    total = mp.mpf(0)
    for k in range(K + 1):
        for kp in range(K + 1):
            inner = mp.fsum(mp.binomial(k, j) * mp.binomial(kp, jp) * (-1) ** (j + jp) * mp.power(j + jp + 2, -s)
                            for j in range(k + 1) for jp in range(kp + 1))
            total += mp.power(2, -(k + kp)) * inner
    return total


def test_inner_sums_depend_on_total_order_only():
    for d in (1, 3):
        assert float(_mp_double_series_direct(d, 4)) == pytest.approx(float(_mp_series(d, 4)), abs=1e-40)


@pytest.mark.parametrize("d", [1, 2, 3, 6])
def test_inner_integral_matches_high_precision(d):
    for m in (0, 1, 5, 17, 40, 90, 120):
        val, err = inner_sum_integral(m, d)
        ref = float(_mp_inner(m, d))
        assert abs(val - ref) <= 1e-12 * max(abs(ref), 1e-3)


def test_naive_inner_sum_agrees_then_refuses():
    for m in (0, 3, 10, NAIVE_MAX_ORDER):
        assert inner_sum_naive(m, 2) == pytest.approx(float(_mp_inner(m, 2)), abs=1e-9)
    with pytest.raises(ValidationError):
        inner_sum_naive(NAIVE_MAX_ORDER + 1, 2)


@pytest.mark.parametrize("d", range(1, 7))
def test_series_matches_high_precision_series(d):
    assert c3_series(d, 60).value == pytest.approx(float(_mp_series(d, 60)), rel=1e-12)


@pytest.mark.parametrize("d", range(1, 7))
def test_series_and_quadrature_agree(d):
    assert abs(c3_series(d, 60).value - c3_quadrature(d).value) <= 1e-8


@pytest.mark.parametrize("d", range(1, 7))
def test_zero_truncation_is_first_term(d):
    assert c3_series(d, 0).value == 2.0 ** (-d / 2)


@pytest.mark.parametrize("d", range(1, 7))
def test_truncation_error_estimate_is_honest(d):
    for K in (5, 10, 20):
        a = c3_series(d, K)
        b = c3_series(d, K + 10)
        assert abs(a.value - b.value) <= a.est_error


def test_naive_and_integral_series_agree_where_both_work():
    assert c3_series(3, 15, inner="naive").value == pytest.approx(c3_series(3, 15).value, abs=1e-10)
    with pytest.raises(ValidationError):
        c3_series(3, 16, inner="naive")


def test_quadrature_properties():
    assert 0 < c3_quadrature(4).value < c3_quadrature(2).value
    assert abs(c3_quadrature(2, tol=1e-12).value - c3_quadrature(2, tol=5e-13).value) <= 1e-10
    assert c3_quadrature(2).value == pytest.approx(float(mp.quad(
        lambda t: 4 * mp.exp(-2 * t) / (1 + mp.exp(-t)) ** 2, [0, mp.inf])), abs=1e-13)


@pytest.mark.parametrize("bad", [0, -1, 1.5])
def test_bad_dimension(bad):
    with pytest.raises(ValidationError):
        c3_series(bad)
    with pytest.raises(ValidationError):
        c3_quadrature(bad)


def test_kernel_second_moment():
    assert kernel_second_moment(1, 1) == pytest.approx(1 / (2 * math.sqrt(math.pi)), abs=1e-15)
    assert kernel_second_moment(1, 1) == pytest.approx(0.2820948, abs=1e-7)
    assert kernel_second_moment(2, 1) == pytest.approx(1 / (4 * math.pi), abs=1e-15)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_kernel_second_moment_by_quadrature(k):
    eps = 0.1
    phi = lambda z: math.exp(-z * z / (2 * k * eps)) / math.sqrt(2 * math.pi * k * eps)
    val, _ = integrate.quad(lambda z: phi(z) ** 2, -np.inf, np.inf)
    assert math.sqrt(eps) * val == pytest.approx(kernel_second_moment(1, k), rel=0.01)


def test_predicted_variance():
    c3 = c3_quadrature(1)
    assert predicted_potential_variance(c3, 1.0) == c3.value
    assert predicted_potential_variance(c3, 0.25) == pytest.approx(2 * predicted_potential_variance(c3, 0.5))
    rho0 = 1 / math.sqrt(2 * math.pi)
    assert predicted_potential_variance(c3, rho0) == pytest.approx(c3.value * math.sqrt(2 * math.pi))
    assert kernel_normalized_variance(c3, rho0) == pytest.approx(c3.value / 4, rel=1e-14)
    with pytest.raises(ValidationError):
        predicted_potential_variance(c3, 0.0)


def test_schedules():
    assert bandwidth_rule(1024, 4) == pytest.approx(0.4204482, abs=1e-7)
    assert theoretical_rate(4) == 0.25
    for n, d, slack in ((1000, 1, 0.5), (4000, 2, 0.25), (10**6, 3, 0.0)):
        eps = clt_epsilon_rule(n, d, slack)
        assert math.sqrt(n) * eps ** (d / 4) / math.sqrt(math.log(n)) == pytest.approx(math.log(n) ** slack, rel=1e-12)
    assert score_clt_epsilon_rule(4000, 1) == pytest.approx(4000 ** (-2 / 9) / math.log(4000))
    with pytest.raises(ValidationError):
        bandwidth_rule(1, 2)
