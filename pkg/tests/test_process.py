import numpy as np
import pytest
from statsmodels.tsa.stattools import acf as sm_acf, pacf as sm_pacf

from rgarch.process import (
    Coefficients,
    ModelOrder,
    RankingSeries,
    check_stationarity,
    conditional_mean_path,
    empirical_acf_pacf,
    mean_recursion,
    simulate,
    theoretical_acf_11,
    unconditional_mean,
)


def test_coefficients_validation():
    with pytest.raises(ValueError):
        Coefficients(0.0)
    with pytest.raises(ValueError):
        Coefficients(1.0, (-0.1,))
    c = Coefficients(2.0, (0.3, 0.1), (0.2,))
    assert c.order == ModelOrder(2, 1)
    assert c.order.m == 2 and c.order.dim == 4
    assert Coefficients.from_array(c.to_array(), c.order) == c
    assert c.names() == ["phi0", "phi1", "phi2", "alpha1"]


def test_stationarity_and_mean():
    c = Coefficients(3.0, (0.2,), (0.3,))
    assert check_stationarity(c).stationary
    assert unconditional_mean(c) == pytest.approx(6.0)
    bad = Coefficients(1.0, (0.6,), (0.5,))
    assert not check_stationarity(bad).stationary
    with pytest.raises(ValueError):
        unconditional_mean(bad)


def test_simulation_rejects_nonstationary():
    bad = Coefficients(1.0, (1.1,), ())
    with pytest.raises(ValueError, match="non-stationary"):
        simulate(5, 20, ModelOrder(1, 0), bad, "kendall", 0)
    s, _ = simulate(5, 20, ModelOrder(1, 0), Coefficients(0.2, (0.3,), ()), "kendall", 0,
                    allow_nonstationary=True)
    assert s.n == 20


@pytest.mark.parametrize("kind", ["kendall", "hamming"])
@pytest.mark.parametrize("order,coef", [
    (ModelOrder(0, 0), Coefficients(2.0)),
    (ModelOrder(1, 1), Coefficients(1.5, (0.3,), (0.4,))),
    (ModelOrder(2, 3), Coefficients(1.0, (0.2, 0.1), (0.1, 0.2, 0.1))),
])
def test_recomputation_is_bit_identical(kind, order, coef):
    series, path = simulate(8, 300, order, coef, kind, np.random.default_rng(4))
    again = conditional_mean_path(series, order, coef, kind, mu_presample=path.presample)
    assert np.array_equal(again.mu, path.mu)
    assert np.array_equal(again.theta, path.theta)


def test_simulate_shapes_and_seed():
    order, coef = ModelOrder(1, 0), Coefficients(1.0, (0.4,), ())
    a, pa = simulate(6, 50, order, coef, "kendall", 9)
    b, pb = simulate(6, 50, order, coef, "kendall", 9)
    assert a == b and np.array_equal(pa.mu, pb.mu)
    assert a.data.shape == (50, 6)
    assert len(pa.mu) == 49 - order.m
    for row in a.ranks():
        assert sorted(row) == list(range(1, 7))


def test_mean_recursion_q0_is_linear():
    d = np.array([1.0, 2.0, 3.0, 4.0])
    mu = mean_recursion(d, Coefficients(0.5, (0.5,), ()))
    assert mu[1:].tolist() == [1.0, 1.5, 2.0]


def test_long_run_mean():
    coef = Coefficients(3.0, (0.3,), ())
    s, _ = simulate(10, 5000, ModelOrder(1, 0), coef, "kendall", np.random.default_rng(1))
    d = s.lag_distances("kendall")
    assert abs(d.mean() - unconditional_mean(coef)) / unconditional_mean(coef) < 0.05


def test_residuals_behave_like_mds():
    order, coef = ModelOrder(1, 1), Coefficients(2.0, (0.3,), (0.3,))
    s, path = simulate(10, 4000, order, coef, "kendall", np.random.default_rng(2))
    d = s.lag_distances("kendall")[order.m:]
    eps = d - path.mu
    n = len(eps)
    assert abs(eps.mean()) < 3 * eps.std() / np.sqrt(n)
    acf, _ = empirical_acf_pacf(eps, 1)
    assert abs(acf[1]) < 3 / np.sqrt(n)


def test_acf_pacf_against_statsmodels():
    x = np.random.default_rng(0).normal(size=400).cumsum() % 7
    acf, pacf = empirical_acf_pacf(x, 12)
    np.testing.assert_allclose(acf, sm_acf(x, nlags=12, fft=False), atol=1e-12)
    np.testing.assert_allclose(pacf, sm_pacf(x, nlags=12, method="ldb"), atol=1e-10)


def test_acf_pacf_identification():
    rng = np.random.default_rng(3)
    n = 10_000
    wn = rng.normal(size=n)
    acf, _ = empirical_acf_pacf(wn, 10)
    assert acf[0] == 1.0
    assert np.all(np.abs(acf[1:]) < 3 / np.sqrt(n))
    ar = np.zeros(n)
    for t in range(1, n):
        ar[t] = 0.5 * ar[t - 1] + wn[t]
    _, pacf = empirical_acf_pacf(ar, 6)
    assert pacf[1] == pytest.approx(0.5, abs=0.03)
    assert np.all(np.abs(pacf[2:]) < 3 / np.sqrt(n))
    with pytest.raises(ValueError):
        empirical_acf_pacf(np.ones(50), 3)
    with pytest.raises(ValueError):
        empirical_acf_pacf(np.arange(5.0), 5)


def test_theoretical_acf_decay():
    th = theoretical_acf_11(0.3, 0.3, 1.0)
    # ARMA(1,1) with AR root 0.6 and MA coefficient -0.3
    a, b = 0.6, -0.3
    assert th.gamma0 == pytest.approx((1 + 2 * a * b + b * b) / (1 - a * a))
    assert th.rho(1) == pytest.approx((1 + a * b) * (a + b) / (1 + 2 * a * b + b * b))
    assert th.rho(2) == pytest.approx(th.rho(1) * 0.6)
    with pytest.raises(ValueError):
        th.rho(0)


def test_series_container():
    data = np.array([[1, 2, 3], [2, 1, 3], [np.nan, 1, np.nan]])
    s = RankingSeries(data)
    assert s.n == 3 and s.k == 3
    assert s.missing_rows.tolist() == [2]
    assert not s.is_complete
    d = s.lag_distances("kendall")
    assert d[0] == 1 and np.isnan(d[1])
    with pytest.raises(ValueError):
        s.data[0, 0] = 5
    with pytest.raises(ValueError):
        RankingSeries([[1, 1, 2]])
