import numpy as np
import pytest
from sklearn.base import clone

from rgarch import RankingGARCH
from rgarch.mcem import inject_missing
from rgarch.predict import ISResult, RankEvent
from rgarch.process import Coefficients, ModelOrder, simulate
from rgarch.validation import NotFittedError


@pytest.fixture(scope="module")
def data():
    s = simulate(6, 120, ModelOrder(1, 0), Coefficients(2.0, (0.4,), ()), "kendall", np.random.default_rng(0))[0]
    return s


def test_params_and_clone():
    est = RankingGARCH(p=2, q=1, distance="hamming", random_state=3)
    params = est.get_params()
    assert params["p"] == 2 and params["distance"] == "hamming"
    twin = clone(est)
    assert twin.get_params() == params


def test_not_fitted():
    est = RankingGARCH()
    with pytest.raises(NotFittedError):
        est.predict()
    with pytest.raises(NotFittedError):
        est.score(np.array([[1, 2], [2, 1]]))


def test_fitted_attributes(data):
    est = RankingGARCH(p=1, q=0).fit(data.data)
    assert est.coef_.shape == (2,) and est.std_errors_.shape == (2,)
    assert est.n_features_in_ == 6
    assert est.n_used_ == data.n - 2
    assert est.mcem_trace_ is None
    assert est.mu_path_.shape == (est.n_used_,)
    assert est.score(data.data) == pytest.approx(est.loglik_, rel=1e-10)
    assert est.aic_ == pytest.approx(-2 * est.loglik_ + 4)
    fc = est.predict()
    assert fc.mu_next > 0 and fc.theta_next > 0
    assert est.forecast(data.data) == fc


def test_event_probability(data):
    est = RankingGARCH(random_state=0).fit(data.data)
    ev = RankEvent.top_retained(data.data[-1])
    exact = est.predict_event_proba(ev, exact=True)
    res = est.predict_event_proba(ev, L_samples=4000)
    assert isinstance(res, ISResult)
    assert abs(res.estimate - exact) < 4 * res.std_error
    assert est.predict_event_proba([(1, 1)], exact=True) > 0


def test_input_checks(data):
    est = RankingGARCH().fit(data.data)
    with pytest.raises(ValueError):
        est.predict(np.tile(np.arange(1, 5), (5, 1)))
    with pytest.raises(ValueError):
        RankingGARCH(method="bayes").fit(data.data)
    with pytest.raises(ValueError):
        RankingGARCH(p=-1).fit(data.data)
    holed = inject_missing(data, 0.1, np.random.default_rng(1))
    with pytest.raises(ValueError):
        RankingGARCH(method="mle").fit(holed.data)


def test_missing_data_switches_to_mcem(data):
    holed = inject_missing(data, 0.1, np.random.default_rng(1))
    est = RankingGARCH(M0=20, max_iter=4, random_state=2).fit(holed.data)
    assert est.mcem_trace_ is not None
    assert 1 <= est.mcem_trace_.n_iter <= 4
    again = RankingGARCH(M0=20, max_iter=4, random_state=2).fit(holed.data)
    np.testing.assert_array_equal(est.coef_, again.coef_)
    assert np.all(np.abs(est.coef_ - [2.0, 0.4]) < 5 * est.std_errors_)
