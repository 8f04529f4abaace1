import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rgarch.link import (
    LinkClampWarning,
    mu_bounds,
    solve_theta,
    theta_from_mu,
    theta_from_mu_squared_loss,
    uniform_mean,
)
from rgarch.mallows import mean_distance


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(["kendall", "hamming"]), st.integers(2, 40), st.floats(0.001, 0.999))
def test_round_trip(kind, k, frac):
    lo, hi = mu_bounds(k, kind)
    mu = lo + frac * (hi - lo)
    theta = theta_from_mu(mu, k, kind)
    assert abs(mean_distance(theta, k, kind) - mu) < 1e-8


def test_known_values():
    # g(1) for k=4 Kendall, from enumeration
    assert theta_from_mu(1.2010783041797837, 4, "kendall") == pytest.approx(1.0, rel=1e-9)
    assert theta_from_mu(1.8363984401831677, 4, "hamming") == pytest.approx(0.8, rel=1e-9)


def test_agrees_with_squared_loss_route():
    for kind, k, mu in [("kendall", 10, 6.0), ("kendall", 31, 112.0), ("hamming", 10, 4.0)]:
        a = theta_from_mu(mu, k, kind)
        b = theta_from_mu_squared_loss(mu, k, kind)
        assert a == pytest.approx(b, rel=1e-5)


def test_vectorised_matches_scalar():
    mus = np.linspace(0.5, 20.0, 25)
    th, clamped = solve_theta(mus, 10, "kendall")
    assert not clamped.any()
    for m, t in zip(mus, th):
        assert t == theta_from_mu(float(m), 10, "kendall")


def test_clamp_and_strict():
    k = 6
    with pytest.warns(LinkClampWarning):
        th = theta_from_mu(uniform_mean(k, "kendall"), k, "kendall")
    assert th > 0
    with pytest.raises(ValueError, match="uniform mean"):
        theta_from_mu(50.0, k, "kendall", strict=True)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        _, clamped = solve_theta(np.array([1.0, 20.0]), k, "kendall")
    assert clamped.tolist() == [False, True]


def test_non_positive_mean_rejected():
    with pytest.raises(ValueError, match="positive"):
        theta_from_mu(0.0, 5, "kendall")


def test_tiny_mean_large_theta():
    th = theta_from_mu(1e-6, 8, "kendall")
    assert mean_distance(th, 8, "kendall") == pytest.approx(1e-6, rel=1e-4)
