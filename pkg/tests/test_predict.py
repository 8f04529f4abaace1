import math

import numpy as np
import pytest

from rgarch.inference import fit_mle
from rgarch.mallows import MallowsSpec, log_psi
from rgarch.link import solve_theta
from rgarch.perms import Permutation
from rgarch.predict import (
    RankEvent,
    exact_event_prob,
    forecast_mean,
    is_event_prob,
    spread_translation,
)
from rgarch.process import Coefficients, ModelOrder, RankingSeries, simulate

# P(item 1 keeps rank 1) under Kendall Mallows(identity, 1) on S_4, by enumeration
TOP_K4_THETA1 = 0.643914259887972


def test_event_validation():
    with pytest.raises(ValueError):
        RankEvent([])
    with pytest.raises(ValueError):
        RankEvent([(1, 1), (1, 2)])
    with pytest.raises(ValueError):
        RankEvent([(1, 1), (2, 1)])
    with pytest.raises(ValueError):
        RankEvent([(5, 1)]).check(4)
    ev = RankEvent.top_retained([3, 1, 2])
    assert ev.fixed_positions == frozenset({(2, 1)})


def test_exact_oracle_value():
    p = exact_event_prob(RankEvent([(1, 1)]), [1, 2, 3, 4], 1.0, "kendall")
    assert p == pytest.approx(TOP_K4_THETA1, abs=1e-14)


def test_full_fix_is_mode_mass():
    k, theta = 5, 0.8
    mode = [2, 4, 1, 5, 3]
    ev = RankEvent([(i + 1, r) for i, r in enumerate(mode)])
    for kind in ("kendall", "hamming"):
        exact = exact_event_prob(ev, mode, theta, kind)
        assert exact == pytest.approx(math.exp(-log_psi(theta, k, kind)), rel=1e-12)
        res = is_event_prob(ev, mode, theta, kind, L_samples=10)
        assert res.estimate == pytest.approx(exact, rel=1e-12)
        assert res.std_error == 0.0


def test_k_minus_one_fixed_is_exact():
    mode = [1, 2, 3, 4, 5]
    ev = RankEvent([(1, 2), (2, 1), (3, 3), (4, 4)])
    res = is_event_prob(ev, mode, 0.7, "kendall", L_samples=5)
    assert res.std_error == 0.0
    assert res.estimate == pytest.approx(exact_event_prob(ev, mode, 0.7, "kendall"), rel=1e-12)


def test_uniform_limit():
    ev = RankEvent([(3, 1)])
    assert exact_event_prob(ev, [1, 2, 3, 4, 5], 1e-12, "kendall") == pytest.approx(0.2, abs=1e-10)
    res = is_event_prob(ev, [1, 2, 3, 4, 5], 1e-12, "hamming", L_samples=50, density_kind="naive", rng=0)
    assert res.estimate == pytest.approx(0.2, abs=1e-10)


@pytest.mark.parametrize("kind", ["kendall", "hamming"])
@pytest.mark.parametrize("density", ["naive", "designed"])
def test_is_unbiased(kind, density):
    mode = [3, 1, 4, 2, 6, 5]
    ev = RankEvent([(2, 1), (5, 3)])
    exact = exact_event_prob(ev, mode, 0.6, kind)
    res = is_event_prob(ev, mode, 0.6, kind, L_samples=20_000, density_kind=density, rng=3)
    assert abs(res.estimate - exact) < 4 * res.std_error
    assert res.L_samples == 20_000


def test_designed_has_lower_variance():
    mode = list(range(1, 8))
    ev = RankEvent.top_retained(mode)
    a = is_event_prob(ev, mode, 1.2, "kendall", 4000, "naive", rng=1)
    b = is_event_prob(ev, mode, 1.2, "kendall", 4000, "designed", rng=1)
    assert b.std_error < a.std_error
    assert b.theta_proposal == pytest.approx(spread_translation(1.2, 7, 6, "kendall"))


def test_is_arguments():
    with pytest.raises(ValueError):
        is_event_prob(RankEvent([(1, 1)]), [1, 2, 3], 1.0, L_samples=1)
    with pytest.raises(ValueError):
        is_event_prob(RankEvent([(1, 1)]), [1, 2, 3], 1.0, density_kind="other")
    with pytest.raises(ValueError):
        exact_event_prob(RankEvent([(1, 1)]), list(range(1, 10)), 1.0)


def test_spread_translation_identity():
    assert spread_translation(0.9, 6, 6, "kendall") == pytest.approx(0.9)
    assert spread_translation(0.9, 6, 6, "hamming") == pytest.approx(0.9)


def test_forecast_p0_and_p1():
    rng = np.random.default_rng(5)
    s0 = simulate(6, 150, ModelOrder(0, 0), Coefficients(4.0, (), ()), "kendall", rng)[0]
    fit0 = fit_mle(s0, ModelOrder(0, 0))
    fc = forecast_mean(fit0, s0)
    assert fc.mu_next == pytest.approx(fit0.coef_hat.phi0)
    coef = Coefficients(1.5, (0.4,), ())
    s1 = simulate(6, 150, ModelOrder(1, 0), coef, "kendall", rng)[0]
    fit1 = fit_mle(s1, ModelOrder(1, 0))
    fc = forecast_mean(fit1, s1)
    d_last = s1.lag_distances("kendall")[-1]
    c = fit1.coef_hat
    assert fc.mu_next == pytest.approx(c.phi0 + c.phi[0] * d_last)
    assert fc.theta_next == pytest.approx(solve_theta(fc.mu_next, 6, "kendall")[0])


def test_forecast_rejects_incomplete_tail():
    rng = np.random.default_rng(6)
    s = simulate(5, 40, ModelOrder(1, 0), Coefficients(2.0, (0.3,), ()), "kendall", rng)[0]
    fit = fit_mle(s, ModelOrder(1, 0))
    data = s.data.copy()
    data[-1, :2] = np.nan
    with pytest.raises(ValueError, match="complete"):
        forecast_mean(fit, RankingSeries(data))
