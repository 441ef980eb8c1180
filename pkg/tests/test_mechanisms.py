import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from privcgd.data import DataMatrix
from privcgd.mechanisms import (
    PrivacyParams,
    RngStream,
    amplified_epsilon,
    analytic_gaussian_sigma,
    classical_gaussian_sigma,
    clip_matrix,
    clip_sensitivity,
    gaussian_dp_delta,
    gaussian_perturb_matrix,
    laplace_noise,
    laplace_perturb,
    subsample,
)

# minimal sigma from 50-digit bisection on the privacy-curve identity
SIGMA_ORACLE = {
    (0.1, 1e-5): 30.7495661319775,
    (0.1, 1e-8): 45.9373601849883,
    (0.5, 1e-5): 7.03182667558249,
    (0.5, 1e-8): 9.86353379617383,
    (1.0, 1e-5): 3.73063163481594,
    (1.0, 1e-8): 5.10030878752993,
    (10.0, 1e-5): 0.499888619709009,
}


def test_laplace_scale():
    assert PrivacyParams(0.5, 0.0, 0.1).laplace_scale == pytest.approx(0.2)


def test_infinite_epsilon_adds_nothing():
    assert laplace_perturb(0.3, PrivacyParams(math.inf, 0.0, 0.1), RngStream(1)) == 0.3


def test_laplace_mean_absolute_deviation():
    draws = laplace_noise(0.2, RngStream(7), size=1_000_000)
    assert abs(np.mean(np.abs(draws)) - 0.2) <= 0.02 * 0.2
    assert abs(np.mean(draws)) < 0.002


def test_params_validation():
    with pytest.raises(ValueError):
        PrivacyParams(0.0)
    with pytest.raises(ValueError):
        PrivacyParams(1.0, delta=1.0)


@pytest.mark.parametrize("key", sorted(SIGMA_ORACLE))
def test_analytic_sigma_matches_oracle(key):
    eps, delta = key
    sigma = analytic_gaussian_sigma(1.0, eps, delta)
    assert sigma == pytest.approx(SIGMA_ORACLE[key], rel=1e-8)
    assert abs(gaussian_dp_delta(sigma, eps, 1.0) - delta) <= 1e-9 * delta
    if eps <= 1:
        assert sigma <= classical_gaussian_sigma(1.0, eps, delta)


def test_classical_sigma_example():
    assert classical_gaussian_sigma(1.0, 1.0, 1e-5) == pytest.approx(4.8448, abs=1e-4)


def test_sigma_scales_with_sensitivity_and_shrinks_with_epsilon():
    s1 = analytic_gaussian_sigma(1.0, 1.0, 1e-5)
    assert analytic_gaussian_sigma(2.0, 1.0, 1e-5) == pytest.approx(2 * s1, rel=1e-8)
    assert analytic_gaussian_sigma(1.0, 10.0, 1e-5) < s1


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 5.0), st.floats(1e-10, 0.1), st.floats(1e-4, 100.0))
def test_sigma_residual_property(eps, delta, sens):
    sigma = analytic_gaussian_sigma(sens, eps, delta)
    assert gaussian_dp_delta(sigma, eps, sens) <= delta
    assert delta - gaussian_dp_delta(sigma, eps, sens) <= 1e-9 * delta
    if eps <= 1:
        assert sigma <= classical_gaussian_sigma(sens, eps, delta)


def test_clip_matrix():
    small = np.zeros((1, 2, 2))
    small[0, 0, 1] = 0.5
    mean, _ = clip_matrix(small, 1.0)
    assert mean[0, 1] == pytest.approx(0.5)
    big = np.zeros((1, 2, 2))
    big[0, 1, 0] = 4.0
    mean, _ = clip_matrix(big, 1.0)
    assert mean[1, 0] == pytest.approx(1.0)


def test_clip_sensitivity_takes_refined_bound():
    assert clip_sensitivity(5, 0.1, 1000) == pytest.approx(math.sqrt(20) * 0.1 / 1000)
    assert clip_sensitivity(5, 0.1, 1000) < 5 * 0.1 / 1000


@settings(max_examples=30)
@given(st.integers(1, 20), st.integers(2, 5), st.floats(0.1, 5.0))
def test_clip_is_noop_under_threshold(n, d, s):
    rng = np.random.default_rng(n * 31 + d)
    G = rng.normal(size=(n, d, d))
    norms = np.sqrt((G**2).sum(axis=(1, 2)))
    G = G / norms[:, None, None] * s * 0.99
    mean, _ = clip_matrix(G, s)
    np.testing.assert_allclose(mean, G.mean(axis=0), rtol=1e-12, atol=1e-15)


def test_gaussian_perturb():
    M = np.arange(4.0).reshape(2, 2)
    np.testing.assert_array_equal(gaussian_perturb_matrix(M, 0.0, RngStream()), M)
    big = np.zeros((1000, 1000))
    out = gaussian_perturb_matrix(big, 0.7, RngStream(3))
    assert out.shape == big.shape
    assert abs(out.var() / 0.49 - 1) <= 0.02


def test_streams_reproducible_and_distinct():
    a = RngStream(5, 2).uniform(10)
    b = RngStream(5, 2).uniform(10)
    c = RngStream(5, 3).uniform(10)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_subsample():
    data = DataMatrix.from_array(np.arange(200.0).reshape(100, 2))
    assert subsample(data, 1.0, RngStream()) is data
    half = subsample(data, 0.5, RngStream(1))
    assert half.n == 50
    rows = {tuple(r) for r in half.values}
    assert len(rows) == 50 and rows <= {tuple(r) for r in data.values}
    with pytest.raises(ValueError):
        subsample(data, 0.0, RngStream())


def test_amplification():
    assert amplified_epsilon(1.0, 1.0) == pytest.approx(1.0)
    assert amplified_epsilon(1.0, 0.1) == pytest.approx(math.log(1 + 0.1 * (math.e - 1)))
    assert amplified_epsilon(1.0, 0.1) < 1.0
