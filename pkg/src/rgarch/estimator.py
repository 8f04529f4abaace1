"""Estimator interface in the scikit-learn style."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .inference import FitOptions, fit_mle, log_likelihood
from .mcem import MCEMConfig, mcem_fit
from .perms import as_distance
from .predict import RankEvent, exact_event_prob, forecast_mean, is_event_prob
from .process import ModelOrder, RankingSeries
from .validation import NotFittedError, check_order, check_random_state, check_rankings

__all__ = ["RankingGARCH"]


class RankingGARCH(BaseEstimator):
    """Ranking-GARCH model for a time series of rankings.

    The lag-one distance ``d_t = d(π_t, π_{t-1})`` follows a Mallows law
    whose mean obeys ``μ_t = φ₀ + Σ φ_i d_{t-i} + Σ α_j μ_{t-j}``.

    Parameters
    ----------
    p, q : int
        Autoregressive and feedback orders.
    distance : {"kendall", "hamming"}
    n_starts : int
        Starting points for the maximiser.
    method : {"auto", "mle", "mcem"}
        ``"auto"`` uses Monte Carlo EM only when ``X`` has missing entries.
    M0, epsilon, L, max_iter, completion :
        Monte Carlo EM settings, see :class:`rgarch.mcem.MCEMConfig`.
    random_state : int, Generator or None
        Seeds the Monte Carlo EM and importance sampling.
    strict : bool
        Fail when a fitted conditional mean reaches the uniform mean instead
        of clamping it.

    Attributes
    ----------
    coef_ : ndarray of shape (1 + p + q,)
        ``(φ₀, φ₁..φ_p, α₁..α_q)``.
    std_errors_ : ndarray of shape (1 + p + q,)
    loglik_, aic_, bic_ : float
    mu_path_ : ndarray
        Fitted conditional means for the usable terms.
    residuals_ : ndarray
    converged_ : bool
    n_used_ : int
    mcem_trace_ : MCEMTrace or None
    result_ : FitResult
    n_features_in_ : int
        Number of ranked items ``k``.
    """

    def __init__(self, p=1, q=0, distance="kendall", n_starts=5, method="auto", M0=200,
                 epsilon=0.05, L=4.0, max_iter=50, completion="posterior", random_state=None,
                 strict=False):
        self.p = p
        self.q = q
        self.distance = distance
        self.n_starts = n_starts
        self.method = method
        self.M0 = M0
        self.epsilon = epsilon
        self.L = L
        self.max_iter = max_iter
        self.completion = completion
        self.random_state = random_state
        self.strict = strict

    def _order(self) -> ModelOrder:
        return ModelOrder(*check_order(self.p, self.q))

    def _seed(self) -> int:
        if isinstance(self.random_state, (int, np.integer)):
            return int(self.random_state)
        return int(check_random_state(self.random_state).integers(2**63))

    def fit(self, X, y=None):
        """Fit to an ``(n, k)`` matrix of ranks; NaN marks missing entries."""
        if self.method not in ("auto", "mle", "mcem"):
            raise ValueError(f"unknown method {self.method!r}")
        arr = check_rankings(X, allow_missing=self.method != "mle", min_rows=2)
        series = RankingSeries(arr)
        kind = as_distance(self.distance)
        order = self._order()
        options = FitOptions(n_starts=self.n_starts)
        use_mcem = self.method == "mcem" or (self.method == "auto" and not series.is_complete)
        if use_mcem:
            config = MCEMConfig(M0=self.M0, epsilon=self.epsilon, L=self.L, max_iters=self.max_iter,
                                seed=self._seed(), completion=self.completion)
            result, trace = mcem_fit(series, order, kind, config, options)
        else:
            result, trace = fit_mle(series, order, kind, options), None
        if self.strict and result.n_clamped:
            raise ValueError(
                f"{result.n_clamped} fitted conditional means reached the uniform mean"
            )
        self.result_ = result
        self.coef_ = result.coef_hat.to_array()
        self.std_errors_ = result.std_errors
        self.loglik_ = result.loglik
        self.aic_ = result.aic
        self.bic_ = result.bic
        self.mu_path_ = result.mu_path.mu
        self.residuals_ = result.residuals
        self.converged_ = result.converged
        self.n_used_ = result.n_used
        self.mcem_trace_ = trace
        self.n_features_in_ = series.k
        self._series = series
        return self

    def _check_fitted(self):
        if not hasattr(self, "result_"):
            raise NotFittedError("this RankingGARCH instance is not fitted yet; call fit first")

    def _series_or_train(self, X):
        if X is None:
            return self._series
        arr = check_rankings(X)
        if arr.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {arr.shape[1]} items, model was fitted with {self.n_features_in_}")
        return RankingSeries(arr)

    def predict(self, X=None):
        """One-step-ahead ``(mu_next, theta_next)`` after the last ranking of ``X``."""
        self._check_fitted()
        return forecast_mean(self.result_, self._series_or_train(X))

    forecast = predict

    def score(self, X, y=None) -> float:
        """Conditional log-likelihood of a complete series under the fitted coefficients."""
        self._check_fitted()
        series = self._series_or_train(X)
        return log_likelihood(series, self.result_.order, self.result_.coef_hat,
                              self.result_.distance, strict=self.strict)

    def predict_event_proba(self, event, X=None, L_samples=500, density_kind="designed",
                            exact=False, random_state=None):
        """Probability of a :class:`RankEvent` for the next ranking.

        The mode is the last ranking of ``X`` and the spread is the one-step
        forecast. ``exact=True`` enumerates ``S_k`` (small ``k`` only).
        """
        self._check_fitted()
        series = self._series_or_train(X)
        if not isinstance(event, RankEvent):
            event = RankEvent(event)
        fc = forecast_mean(self.result_, series)
        mode = series.data[-1].astype(int)
        if exact:
            return exact_event_prob(event, mode, fc.theta_next, self.result_.distance)
        rng = check_random_state(self.random_state if random_state is None else random_state)
        return is_event_prob(event, mode, fc.theta_next, self.result_.distance, L_samples,
                             density_kind, rng)
