"""Inverse of the mean link: recover the spread θ from a target mean distance."""

from __future__ import annotations

import functools
import warnings

import numpy as np
from scipy.optimize import minimize_scalar

from .mallows import mean_distance, moments, theta_max
from .perms import DistanceKind, as_distance

__all__ = [
    "LinkClampWarning",
    "THETA_MIN",
    "uniform_mean",
    "mu_bounds",
    "solve_theta",
    "theta_from_mu",
    "theta_from_mu_squared_loss",
]

THETA_MIN = 1e-8
_TOL = 1e-10
_MAX_ITER = 100


class LinkClampWarning(RuntimeWarning):
    """A target mean outside the admissible range was clamped."""


def uniform_mean(k: int, distance="kendall") -> float:
    """Mean distance under the uniform law on ``S_k`` (the θ → 0⁺ limit of g)."""
    if as_distance(distance) is DistanceKind.KENDALL:
        return k * (k - 1) / 4.0
    return float(k - 1)


@functools.lru_cache(maxsize=None)
def _grid(k: int, kind: DistanceKind):
    # log-spaced table of g, increasing in mu after the flip
    log_theta = np.linspace(np.log(THETA_MIN), np.log(theta_max(k)), 513)
    mu = mean_distance(np.exp(log_theta), k, kind)
    return mu[::-1].copy(), log_theta[::-1].copy()


def mu_bounds(k: int, distance="kendall") -> tuple[float, float]:
    """Range of means reachable with θ in ``[THETA_MIN, theta_max(k)]``."""
    kind = as_distance(distance)
    lo = float(mean_distance(theta_max(k), k, kind))
    hi = min(uniform_mean(k, kind) * (1 - 1e-9), float(mean_distance(THETA_MIN, k, kind)))
    return lo, hi


def solve_theta(mu, k: int, distance="kendall"):
    """Vectorised bracketed Newton solve of ``g(θ) = mu``.

    Returns ``(theta, clamped)`` where ``clamped`` marks entries whose target
    was at or above the uniform mean and had to be pulled inside the range.
    No warnings are emitted; see :func:`theta_from_mu` for the checked API.
    """
    kind = as_distance(distance)
    mu = np.asarray(mu, dtype=float)
    if np.any(~(mu > 0)):
        raise ValueError("mean distance must be strictly positive")
    lo_mu, hi_mu = mu_bounds(k, kind)
    clamped = mu > hi_mu
    target = np.clip(mu, lo_mu, hi_mu).ravel()

    mu_grid, lt_grid = _grid(k, kind)
    theta = np.exp(np.interp(target, mu_grid, lt_grid))
    idx = np.clip(np.searchsorted(mu_grid, target), 1, len(mu_grid) - 1)
    # bracket [lo, hi] in θ; g(lo) >= target >= g(hi)
    hi = np.exp(lt_grid[idx - 1])
    lo = np.exp(lt_grid[idx])
    active = np.ones(target.shape, dtype=bool)
    for _ in range(_MAX_ITER):
        t = theta[active]
        g, var = moments(t, k, kind)
        f = g - target[active]
        done = np.abs(f) < _TOL
        a_lo, a_hi = lo[active], hi[active]
        a_lo = np.where(f > 0, t, a_lo)
        a_hi = np.where(f < 0, t, a_hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = t + f / var
        bad = ~np.isfinite(step) | (step <= a_lo) | (step >= a_hi)
        step = np.where(bad, 0.5 * (a_lo + a_hi), step)
        lo[active], hi[active] = a_lo, a_hi
        step = np.where(done, t, step)
        theta[active] = step
        still = np.flatnonzero(active)[~done]
        # stop when the bracket has collapsed to float resolution
        width_ok = hi[still] - lo[still] <= 4 * np.finfo(float).eps * hi[still]
        active[:] = False
        active[still[~width_ok]] = True
        if not active.any():
            break
    theta = theta.reshape(mu.shape)
    if theta.ndim == 0:
        return float(theta), bool(clamped)
    return theta, clamped


def theta_from_mu(mu, k: int, distance="kendall", strict: bool = False):
    """Spread θ with ``mean_distance(θ) == mu``.

    Parameters
    ----------
    mu : float or array_like
        Target mean distance, admissible in ``(0, uniform_mean(k))``.
    strict : bool
        Raise instead of clamping when ``mu`` reaches the uniform mean.
    """
    theta, clamped = solve_theta(mu, k, distance)
    if np.any(clamped):
        msg = (
            f"mean distance at or above the uniform mean {uniform_mean(k, distance)}"
            " for this k; clamped to the near-uniform spread"
        )
        if strict:
            raise ValueError(msg)
        warnings.warn(msg, LinkClampWarning, stacklevel=2)
    return theta


def theta_from_mu_squared_loss(mu: float, k: int, distance="kendall") -> float:
    """Reference route: minimise ``(g(θ) - mu)²`` with a bounded scalar optimiser."""
    res = minimize_scalar(
        lambda lt: (mean_distance(np.exp(lt), k, distance) - mu) ** 2,
        bounds=(np.log(THETA_MIN), np.log(theta_max(k))),
        method="bounded",
        options={"xatol": 1e-12, "maxiter": 500},
    )
    return float(np.exp(res.x))
