"""Conditional maximum likelihood for complete ranking series.

The log-likelihood is ``Σ_{s>=m} -θ_s d_s - log ψ(θ_s)`` with
``θ_s = g⁻¹(μ_s)``. Since ``dlogψ/dθ = -E d`` and ``g'(θ) = -Var d``, the
score is ``U = X diag(1/Var_s) (d - μ)`` and the expected information is
``K = X diag(1/Var_s) Xᵀ`` where ``X[j, s] = ∂μ_s/∂β_j``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.optimize import minimize
from scipy.signal import lfilter

from .link import solve_theta
from .mallows import log_psi, moments
from .perms import DistanceKind, as_distance
from .process import (
    Coefficients,
    ConditionalMeanPath,
    ModelOrder,
    RankingSeries,
    empirical_acf_pacf,
    mean_recursion,
)

__all__ = [
    "FitOptions",
    "FitResult",
    "ScoreState",
    "ScanRow",
    "log_likelihood",
    "loglik_terms",
    "score",
    "information_matrix",
    "standard_errors",
    "fit_mle",
    "residuals",
    "scale_residuals",
    "order_scan",
    "select_order",
    "moment_starts",
    "maximize",
]


# -- likelihood engine on stacks of distance series ---------------------------


def _link_quantities(mu_t: np.ndarray, k: int, kind: DistanceKind, shared=None):
    """θ, Var, log ψ and clamp flags for conditional means ``mu_t`` of shape (M, T).

    Columns flagged in ``shared`` are identical across rows and solved once.
    """
    if shared is None or not np.any(shared) or mu_t.shape[0] == 1:
        theta, clamped = solve_theta(mu_t, k, kind)
        theta = np.asarray(theta)
        var = moments(theta, k, kind)[1]
        lpsi = log_psi(theta, k, kind)
        return theta, np.asarray(var), np.asarray(lpsi), np.asarray(clamped)
    M, T = mu_t.shape
    theta = np.empty((M, T))
    var = np.empty((M, T))
    lpsi = np.empty((M, T))
    clamped = np.empty((M, T), dtype=bool)
    for cols, block in ((shared, mu_t[:1, shared]), (~shared, mu_t[:, ~shared])):
        if block.size == 0:
            continue
        th, cl = solve_theta(block, k, kind)
        v = moments(th, k, kind)[1]
        lp = log_psi(th, k, kind)
        theta[:, cols], var[:, cols], lpsi[:, cols], clamped[:, cols] = th, v, lp, cl
    return theta, var, lpsi, clamped


def _dmu_dbeta(d: np.ndarray, mu: np.ndarray, coef: Coefficients) -> np.ndarray:
    """``∂μ_s/∂β`` for ``s >= m``; shape (dim, M, T). Pre-sample means are constants."""
    p, q = len(coef.phi), len(coef.alpha)
    m = max(p, q)
    N = d.shape[-1]
    T = N - m
    base = np.empty((1 + p + q,) + d.shape[:-1] + (T,))
    base[0] = 1.0
    for i in range(1, p + 1):
        base[i] = d[..., m - i : N - i]
    for j in range(1, q + 1):
        base[p + j] = mu[..., m - j : N - j]
    if q == 0:
        return base
    return lfilter([1.0], np.r_[1.0, -np.asarray(coef.alpha)], base, axis=-1)


@dataclass
class _Evaluation:
    value: float
    grad: np.ndarray | None
    per_replicate: np.ndarray
    mu: np.ndarray
    theta: np.ndarray
    var: np.ndarray
    X: np.ndarray | None
    clamped: np.ndarray


def _evaluate(
    d: np.ndarray,
    coef: Coefficients,
    k: int,
    kind: DistanceKind,
    presample=None,
    shared=None,
    grad: bool = True,
) -> _Evaluation:
    """Average over replicates (rows of ``d``) of the log-likelihood and its score."""
    d = np.atleast_2d(d)
    m = coef.order.m
    mu = mean_recursion(d, coef, presample)
    d_t, mu_t = d[:, m:], mu[:, m:]
    theta, var, lpsi, clamped = _link_quantities(mu_t, k, kind, shared)
    ell = -theta * d_t - lpsi
    per_rep = ell.sum(axis=1)
    value = float(per_rep.mean())
    X = g = None
    if grad:
        X = _dmu_dbeta(d, mu, coef)
        w = np.where(clamped, 0.0, (d_t - mu_t) / var)
        g = (X * w).sum(axis=-1).mean(axis=-1)
    return _Evaluation(value, g, per_rep, mu_t, theta, var, X, clamped)


# -- public likelihood API ---------------------------------------------------


def _complete_distances(series, kind: DistanceKind) -> tuple[np.ndarray, int]:
    series = series if isinstance(series, RankingSeries) else RankingSeries(series)
    if not series.is_complete:
        raise ValueError(
            "series has missing entries; use mcem_fit for incomplete rankings"
        )
    return series.lag_distances(kind), series.k


def _check_inputs(series, order: ModelOrder, coef: Coefficients, distance):
    kind = as_distance(distance)
    d, k = _complete_distances(series, kind)
    if coef.order != order:
        raise ValueError(f"coefficients have order {coef.order}, expected {order}")
    if len(d) <= order.m:
        raise ValueError(f"series too short for order ({order.p}, {order.q})")
    return d, k, kind


def loglik_terms(series, order, coef, distance="kendall", mu_presample=None) -> np.ndarray:
    """Per-time contributions ``ℓ_s`` for ``s = m..N-1``."""
    d, k, kind = _check_inputs(series, order, coef, distance)
    m = order.m
    mu = mean_recursion(d, coef, mu_presample)
    theta, _, lpsi, _ = _link_quantities(mu[None, m:], k, kind)
    return (-theta * d[m:] - lpsi)[0]


def log_likelihood(
    series, order, coef, distance="kendall", strict: bool = False, mu_presample=None
) -> float:
    """Conditional log-likelihood of a complete series.

    With ``strict=True`` a conditional mean at or above the uniform mean
    raises instead of being clamped.
    """
    d, k, kind = _check_inputs(series, order, coef, distance)
    ev = _evaluate(d, coef, k, kind, presample=mu_presample, grad=False)
    if strict and ev.clamped.any():
        raise ValueError("conditional mean outside the admissible range")
    return ev.value


@dataclass(frozen=True)
class ScoreState:
    """Score ``U = X D (d - μ)`` with ``D = diag(1 / Var_s)``."""

    X: np.ndarray
    D: np.ndarray
    U: np.ndarray
    loglik: float
    residuals: np.ndarray


def score(series, order, coef, distance="kendall", mu_presample=None) -> ScoreState:
    d, k, kind = _check_inputs(series, order, coef, distance)
    ev = _evaluate(d, coef, k, kind, presample=mu_presample)
    m = order.m
    return ScoreState(
        X=ev.X[:, 0, :], D=1.0 / ev.var[0], U=ev.grad, loglik=ev.value,
        residuals=d[m:] - ev.mu[0],
    )


def information_matrix(series, order, coef, distance="kendall", mu_presample=None) -> np.ndarray:
    """Expected information ``K_n = X D Xᵀ``; symmetric positive semi-definite."""
    st = score(series, order, coef, distance, mu_presample)
    return (st.X * st.D) @ st.X.T


def standard_errors(K: np.ndarray) -> tuple[np.ndarray, bool]:
    """Square roots of the diagonal of ``K⁻¹``; pseudo-inverse if ``K`` is singular.

    Returns ``(se, singular)``.
    """
    K = 0.5 * (K + K.T)
    singular = False
    try:
        if np.linalg.cond(K) > 1e12:
            raise np.linalg.LinAlgError
        cov = np.linalg.inv(K)
    except np.linalg.LinAlgError:
        singular = True
        cov = np.linalg.pinv(K)
    return np.sqrt(np.clip(np.diag(cov), 0.0, None)), singular


# -- optimiser ---------------------------------------------------------------


@dataclass(frozen=True)
class FitOptions:
    """Settings for the constrained maximiser.

    Coefficients are optimised as logs; a quadratic barrier
    ``barrier_weight * max(0, Σφ + Σα - barrier_start)²`` keeps the search
    inside the stationary region.
    """

    n_starts: int = 5
    polish: bool = True
    barrier_weight: float = 1e3
    barrier_start: float = 0.999
    ftol: float = 1e-8
    xtol: float = 1e-6
    max_rounds: int = 4
    maxiter: int = 500
    starts: tuple | None = None


def _as_options(options) -> FitOptions:
    if options is None:
        return FitOptions()
    if isinstance(options, dict):
        return FitOptions(**options)
    return options


def moment_starts(mean_d: float, order: ModelOrder, n_starts: int = 5) -> list[np.ndarray]:
    """Deterministic starting points around a method-of-moments guess.

    The first start puts half the mean in the intercept and splits the
    remaining persistence evenly; the others vary total persistence and the
    split between autoregressive and feedback terms.
    """
    p, q = order.p, order.q
    if p + q == 0:
        return [np.array([mean_d])]
    plans = [(0.5, 1.0), (0.2, 1.0), (0.8, 1.0), (0.35, 3.0), (0.65, 1 / 3)]
    out = []
    for pers, ratio in plans[: max(1, n_starts)]:
        wp = np.full(p, ratio) if q else np.ones(p)
        wq = np.ones(q)
        w = np.r_[wp, wq]
        w = pers * w / w.sum()
        out.append(np.r_[mean_d * (1 - pers), w])
    return out


def maximize(
    objective: Callable[[np.ndarray, bool], tuple[float, np.ndarray | None]],
    starts: list[np.ndarray],
    order: ModelOrder,
    options: FitOptions,
) -> tuple[np.ndarray, float, bool, str]:
    """Maximise ``objective(beta, need_grad) -> (value, grad)`` over admissible β.

    Multi-start L-BFGS on log-coefficients with the analytic gradient, then
    alternating Nelder–Mead polish and gradient refinement until successive
    rounds change the objective by less than ``ftol`` and the coefficients by
    less than ``xtol``.
    """
    def pers(beta):
        return beta[1:].sum()

    # log-space box: keeps line searches away from overflow
    hi0 = math.log(max(50.0 * float(np.max([b[0] for b in starts])), 1.0))
    bounds = [(-25.0, hi0)] + [(-25.0, math.log(1.5))] * (order.dim - 1)
    lo_b = np.array([b[0] for b in bounds])
    hi_b = np.array([b[1] for b in bounds])

    def neg(u, need_grad=True):
        beta = np.exp(np.clip(u, lo_b, hi_b))
        # explosive trial points overflow; they are rejected below
        with np.errstate(over="ignore", invalid="ignore"):
            val, g = objective(beta, need_grad)
        excess = max(0.0, pers(beta) - options.barrier_start)
        val = val - options.barrier_weight * excess**2
        if not np.isfinite(val):
            return (np.inf, np.zeros_like(u)) if need_grad else np.inf
        if not need_grad:
            return -val
        gb = g.copy()
        if excess > 0:
            gb[1:] -= 2 * options.barrier_weight * excess
        return -val, -(gb * beta)

    def lbfgs(u0):
        res = minimize(
            neg, np.clip(u0, lo_b, hi_b), jac=True, method="L-BFGS-B", bounds=bounds,
            options={"maxiter": options.maxiter, "ftol": 1e-15, "gtol": 1e-9},
        )
        return res.x, res.fun

    best_u, best_f = None, np.inf
    for b0 in starts:
        b0 = np.maximum(np.asarray(b0, dtype=float), 1e-6)
        u, f = lbfgs(np.log(b0))
        if f < best_f:
            best_u, best_f = u, f
    if best_u is None or not np.isfinite(best_f):
        fallback = best_u if best_u is not None else np.log(np.maximum(starts[0], 1e-6))
        return np.exp(fallback), -best_f, False, "no finite start"

    converged = False
    message = "gradient phase only"
    if not options.polish:
        return np.exp(best_u), -best_f, True, "L-BFGS"
    for _ in range(options.max_rounds):
        nm = minimize(
            lambda u: neg(u, False), best_u, method="Nelder-Mead", bounds=bounds,
            options={"xatol": 1e-9, "fatol": 1e-11, "maxiter": 400 * len(best_u)},
        )
        u, f = lbfgs(nm.x) if nm.fun < best_f + 1e-9 else (best_u, best_f)
        if f > nm.fun:
            u, f = nm.x, nm.fun
        df = best_f - f
        dx = np.max(np.abs(np.exp(u) - np.exp(best_u)))
        if f <= best_f:
            best_u, best_f = u, f
        if abs(df) < options.ftol and dx < options.xtol:
            converged = True
            message = "converged"
            break
        message = f"not converged: |dl|={abs(df):.2e}, |dbeta|={dx:.2e}"
    return np.exp(best_u), -best_f, converged, message


# -- fitting -------------------------------------------------------------------


@dataclass(frozen=True)
class FitResult:
    coef_hat: Coefficients
    order: ModelOrder
    distance: DistanceKind
    k: int
    std_errors: np.ndarray
    loglik: float
    aic: float
    bic: float
    mu_path: ConditionalMeanPath
    residuals: np.ndarray
    converged: bool
    n_used: int
    information: np.ndarray = field(repr=False)
    singular_information: bool = False
    message: str = ""
    n_clamped: int = 0

    @property
    def dim(self) -> int:
        return self.order.dim

    def summary(self) -> dict:
        names = self.coef_hat.names()
        return {
            "order": [self.order.p, self.order.q],
            "distance": self.distance.value,
            "k": self.k,
            "estimates": dict(zip(names, self.coef_hat.to_array().tolist())),
            "std_errors": dict(zip(names, self.std_errors.tolist())),
            "loglik": self.loglik,
            "aic": self.aic,
            "bic": self.bic,
            "n_used": self.n_used,
            "converged": self.converged,
            "singular_information": self.singular_information,
            "message": self.message,
        }


def _information_criteria(loglik: float, dim: int, n_used: int) -> tuple[float, float]:
    return -2 * loglik + 2 * dim, -2 * loglik + math.log(n_used) * dim


def _finish_fit(d, k, kind, order, beta, loglik, converged, message, presample=None):
    coef = Coefficients.from_array(beta, order)
    ev = _evaluate(d, coef, k, kind, presample=presample)
    K = (ev.X[:, 0, :] / ev.var[0]) @ ev.X[:, 0, :].T
    se, singular = standard_errors(K)
    m = order.m
    n_used = len(d) - m
    aic, bic = _information_criteria(ev.value, order.dim, n_used)
    path = ConditionalMeanPath(
        mu=ev.mu[0], theta=ev.theta[0], start=m,
        presample=mean_recursion(d, coef, presample)[:m], n_clamped=int(ev.clamped.sum()),
    )
    return FitResult(
        coef_hat=coef, order=order, distance=kind, k=k, std_errors=se, loglik=ev.value,
        aic=aic, bic=bic, mu_path=path, residuals=d[m:] - ev.mu[0], converged=converged,
        n_used=n_used, information=K, singular_information=singular, message=message,
        n_clamped=int(ev.clamped.sum()),
    )


def fit_mle(series, order: ModelOrder, distance="kendall", options=None) -> FitResult:
    """Conditional maximum likelihood fit of a complete ranking series."""
    kind = as_distance(distance)
    opts = _as_options(options)
    d, k = _complete_distances(series, kind)
    if len(d) - order.m < order.dim + 1:
        raise ValueError(
            f"{len(d) - order.m} usable terms is too few for {order.dim} parameters"
        )

    def objective(beta, need_grad):
        ev = _evaluate(d, Coefficients.from_array(beta, order), k, kind, grad=need_grad)
        return ev.value, ev.grad

    starts = list(opts.starts) if opts.starts else moment_starts(float(d.mean()), order, opts.n_starts)
    beta, ll, converged, message = maximize(objective, starts, order, opts)
    return _finish_fit(d, k, kind, order, beta, ll, converged, message)


def residuals(series, fit: FitResult) -> np.ndarray:
    """Ordinary residuals ``d_s - μ̂_s`` for ``s = m..N-1``."""
    d, _ = _complete_distances(series, fit.distance)
    mu = mean_recursion(d, fit.coef_hat)
    return d[fit.order.m :] - mu[fit.order.m :]


def scale_residuals(r, k: int, distance="hamming") -> np.ndarray:
    """Put Hamming residuals on the Kendall scale (factor ``C(k, 2) / k``)."""
    r = np.asarray(r, dtype=float)
    if as_distance(distance) is DistanceKind.KENDALL:
        return r
    return r * (k * (k - 1) / 2) / k


# -- order selection -----------------------------------------------------------


@dataclass(frozen=True)
class ScanRow:
    p: int
    q: int
    aic: float
    bic: float
    fit: FitResult | None
    error: str | None = None


def order_scan(series, distance="kendall", p_max: int = 3, q_max: int = 3, options=None) -> list[ScanRow]:
    """Fit every order in ``{0..p_max} x {0..q_max}``; failures are recorded, not raised."""
    rows = []
    for p in range(p_max + 1):
        for q in range(q_max + 1):
            try:
                fit = fit_mle(series, ModelOrder(p, q), distance, options)
                rows.append(ScanRow(p, q, fit.aic, fit.bic, fit))
            except (ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
                rows.append(ScanRow(p, q, math.inf, math.inf, None, str(exc)))
    return rows


def select_order(rows: list[ScanRow], criterion: str = "bic") -> ScanRow:
    """Best row by AIC or BIC; ties go to smaller ``p + q``, then smaller ``q``."""
    if criterion not in ("aic", "bic"):
        raise ValueError("criterion must be 'aic' or 'bic'")
    return min(rows, key=lambda r: (getattr(r, criterion), r.p + r.q, r.q))
