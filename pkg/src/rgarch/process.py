"""The ranking GARCH process: conditional-mean recursion, simulation, moments.

Indexing convention: a series holds rankings ``π_0, ..., π_{n-1}`` and lag-one
distances ``d[s] = d(π_{s+1}, π_s)`` for ``s = 0..n-2``. With ``m = max(p, q)``,
the conditional mean ``μ[s]`` is modelled for ``s >= m``; ``μ[s]`` for ``s < m``
are pre-sample values.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .link import LinkClampWarning, solve_theta, uniform_mean
from .mallows import MallowsSpec, sample
from .perms import DistanceKind, PartialRanking, Permutation, as_distance, distance, distances
from .validation import check_order, check_random_state, check_rankings

__all__ = [
    "ModelOrder",
    "Coefficients",
    "RankingSeries",
    "ConditionalMeanPath",
    "TheoreticalAcf11",
    "StationarityCheck",
    "mean_recursion",
    "conditional_mean_path",
    "simulate",
    "check_stationarity",
    "unconditional_mean",
    "theoretical_acf_11",
    "empirical_acf_pacf",
]


@dataclass(frozen=True)
class ModelOrder:
    p: int = 1
    q: int = 0

    def __post_init__(self):
        check_order(self.p, self.q)

    @property
    def m(self) -> int:
        return max(self.p, self.q)

    @property
    def dim(self) -> int:
        return 1 + self.p + self.q


@dataclass(frozen=True)
class Coefficients:
    """Intercept ``phi0``, autoregressive ``phi`` and feedback ``alpha`` weights."""

    phi0: float
    phi: tuple[float, ...] = ()
    alpha: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "phi0", float(self.phi0))
        object.__setattr__(self, "phi", tuple(float(x) for x in np.atleast_1d(self.phi)))
        object.__setattr__(self, "alpha", tuple(float(x) for x in np.atleast_1d(self.alpha)))
        if not self.phi0 > 0:
            raise ValueError("intercept phi0 must be positive")
        if any(x < 0 for x in self.phi + self.alpha):
            raise ValueError("autoregressive and feedback coefficients must be non-negative")

    @property
    def order(self) -> ModelOrder:
        return ModelOrder(len(self.phi), len(self.alpha))

    @property
    def persistence(self) -> float:
        return sum(self.phi) + sum(self.alpha)

    def to_array(self) -> np.ndarray:
        return np.array((self.phi0,) + self.phi + self.alpha)

    @classmethod
    def from_array(cls, beta, order: ModelOrder) -> "Coefficients":
        beta = np.asarray(beta, dtype=float)
        if beta.shape != (order.dim,):
            raise ValueError(f"expected {order.dim} coefficients, got {beta.shape}")
        return cls(beta[0], tuple(beta[1 : 1 + order.p]), tuple(beta[1 + order.p :]))

    def names(self) -> list[str]:
        return (
            ["phi0"]
            + [f"phi{i}" for i in range(1, len(self.phi) + 1)]
            + [f"alpha{j}" for j in range(1, len(self.alpha) + 1)]
        )


class RankingSeries:
    """An ordered sequence of (possibly partial) rankings of ``k`` items.

    Stored as a read-only ``(n, k)`` float array of 1-based ranks, NaN for
    missing entries.
    """

    def __init__(self, rankings):
        data = check_rankings(rankings)
        data.setflags(write=False)
        self._data = data

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def n(self) -> int:
        return self._data.shape[0]

    @property
    def k(self) -> int:
        return self._data.shape[1]

    def __len__(self) -> int:
        return self.n

    def __getitem__(self, t) -> PartialRanking:
        return PartialRanking.from_array(self._data[t])

    def __eq__(self, other) -> bool:
        if not isinstance(other, RankingSeries):
            return NotImplemented
        return np.array_equal(self._data, other._data, equal_nan=True)

    def __repr__(self) -> str:
        return f"RankingSeries(n={self.n}, k={self.k}, missing_rows={len(self.missing_rows)})"

    @property
    def missing_rows(self) -> np.ndarray:
        return np.flatnonzero(np.isnan(self._data).any(axis=1))

    @property
    def is_complete(self) -> bool:
        return self.missing_rows.size == 0

    def ranks(self) -> np.ndarray:
        """Integer rank matrix; only valid for complete series."""
        if not self.is_complete:
            raise ValueError("series has missing entries")
        return self._data.astype(np.int64)

    def lag_distances(self, kind="kendall") -> np.ndarray:
        """``d(π_{s+1}, π_s)`` for each consecutive pair, NaN when either is partial."""
        kind = as_distance(kind)
        filled = np.nan_to_num(self._data).astype(np.int64)
        d = distances(filled[1:], filled[:-1], kind).astype(float)
        miss = np.isnan(self._data).any(axis=1)
        d[miss[1:] | miss[:-1]] = np.nan
        return d


def _as_series(series) -> RankingSeries:
    return series if isinstance(series, RankingSeries) else RankingSeries(series)


@dataclass(frozen=True)
class ConditionalMeanPath:
    """Conditional means ``μ[s]`` and spreads ``θ[s]`` for ``s = start..N-1``."""

    mu: np.ndarray
    theta: np.ndarray
    start: int
    presample: np.ndarray = field(default_factory=lambda: np.empty(0))
    n_clamped: int = 0

    def __len__(self) -> int:
        return len(self.mu)


@dataclass(frozen=True)
class TheoreticalAcf11:
    gamma0: float
    sigma2_eps: float
    phi1: float
    alpha1: float

    def rho(self, h):
        h = np.asarray(h)
        if np.any(h < 1):
            raise ValueError("lags must be >= 1")
        s = self.phi1 + self.alpha1
        lead = self.phi1 * (1 - self.alpha1 * s) / (1 - 2 * self.phi1 * self.alpha1 - self.alpha1**2)
        return lead * s ** (h - 1.0)


class StationarityCheck(NamedTuple):
    stationary: bool
    margin: float


def check_stationarity(coef: Coefficients) -> StationarityCheck:
    """Stationary iff ``Σφ + Σα < 1``; ``margin`` is the distance to that bound."""
    s = coef.persistence
    return StationarityCheck(s < 1, max(0.0, 1.0 - s))


def unconditional_mean(coef: Coefficients) -> float:
    """``φ₀ / (1 - Σφ - Σα)`` for stationary coefficients."""
    if not check_stationarity(coef).stationary:
        raise ValueError(
            f"coefficients are not stationary (persistence {coef.persistence:.6g} >= 1)"
        )
    return coef.phi0 / (1.0 - coef.persistence)


def mean_recursion(d: np.ndarray, coef: Coefficients, mu_presample=None) -> np.ndarray:
    """Run the conditional-mean recursion along the last axis of ``d``.

    Parameters
    ----------
    d : ndarray, shape (..., N)
        Lag-one distance series; leading axes are independent replicates.
    mu_presample : array_like, optional
        Values for ``μ[0..m-1]`` (broadcast against the leading axes). Defaults
        to the mean of ``d`` along its last axis.

    Returns
    -------
    ndarray, shape (..., N)
        ``μ`` with the pre-sample slots filled in.
    """
    d = np.asarray(d, dtype=float)
    N = d.shape[-1]
    p, q = len(coef.phi), len(coef.alpha)
    m = max(p, q)
    mu = np.empty_like(d)
    if mu_presample is None:
        pre = np.mean(d, axis=-1, keepdims=True)
        mu[..., :m] = pre
    else:
        mu[..., :m] = np.asarray(mu_presample, dtype=float)[..., -m:] if m else 0.0
    # same operation order as _step_mean, so simulated and recomputed paths agree exactly
    a = np.full(d[..., m:].shape, coef.phi0)
    for i, ph in enumerate(coef.phi, start=1):
        a = a + ph * d[..., m - i : N - i]
    if q == 0:
        mu[..., m:] = a
        return mu
    for s in range(m, N):
        v = a[..., s - m]
        for j, al in enumerate(coef.alpha, start=1):
            v = v + al * mu[..., s - j]
        mu[..., s] = v
    return mu


def _step_mean(coef: Coefficients, d_hist: Sequence[float], mu_hist: Sequence[float]) -> float:
    s = len(d_hist)
    v = coef.phi0
    for i, ph in enumerate(coef.phi, start=1):
        v = v + ph * d_hist[s - i]
    for j, al in enumerate(coef.alpha, start=1):
        v = v + al * mu_hist[s - j]
    return v


def conditional_mean_path(
    series,
    order: ModelOrder,
    coef: Coefficients,
    distance="kendall",
    mu_presample=None,
) -> ConditionalMeanPath:
    """Conditional means and spreads of a complete series under fixed coefficients."""
    series = _as_series(series)
    kind = as_distance(distance)
    if not series.is_complete:
        raise ValueError("series has missing entries; conditional means are undefined")
    if coef.order != order:
        raise ValueError(f"coefficients have order {coef.order}, expected {order}")
    m = order.m
    if series.n <= m + 1:
        raise ValueError(f"need more than {m + 1} rankings for order ({order.p}, {order.q})")
    d = series.lag_distances(kind)
    mu = mean_recursion(d, coef, mu_presample)
    theta, clamped = solve_theta(mu[m:], series.k, kind)
    return ConditionalMeanPath(
        mu=mu[m:], theta=np.asarray(theta), start=m, presample=mu[:m].copy(),
        n_clamped=int(np.sum(clamped)),
    )


def simulate(
    k: int,
    n: int,
    order: ModelOrder,
    coef: Coefficients,
    distance="kendall",
    rng=None,
    allow_nonstationary: bool = False,
    burn_in: int | None = None,
    method: str = "auto",
) -> tuple[RankingSeries, ConditionalMeanPath]:
    """Simulate ``n`` rankings from the ranking GARCH process.

    The first two rankings are uniform on ``S_k``; pre-sample distances and
    conditional means are set to the unconditional mean. ``burn_in`` rankings
    (default ``100 + m``) are generated and discarded before the ``n`` kept.

    The returned path satisfies
    ``conditional_mean_path(series, order, coef, distance, path.presample)``
    reproducing ``path.mu`` exactly.
    """
    kind = as_distance(distance)
    rng = check_random_state(rng)
    if coef.order != order:
        raise ValueError(f"coefficients have order {coef.order}, expected {order}")
    m = order.m
    if n < m + 2:
        raise ValueError(f"need n >= {m + 2} for order ({order.p}, {order.q})")
    stationary = check_stationarity(coef).stationary
    if not stationary:
        if not allow_nonstationary:
            raise ValueError(
                f"non-stationary coefficients (persistence {coef.persistence:.6g} >= 1)"
            )
        warnings.warn("simulating a non-stationary configuration", RuntimeWarning, stacklevel=2)
    level = unconditional_mean(coef) if stationary else coef.phi0
    burn = 100 + m if burn_in is None else int(burn_in)
    total = burn + n

    first = Permutation(rng.permutation(k) + 1)
    second = Permutation(rng.permutation(k) + 1)
    rankings = [first, second]
    d_hist: list[float] = [level] * m + [float(distance_of(second, first, kind))]
    mu_hist: list[float] = [level] * (m + 1)
    n_clamped = 0
    while len(rankings) < total:
        mu = _step_mean(coef, d_hist, mu_hist)
        theta, clamped = solve_theta(mu, k, kind)
        n_clamped += int(clamped)
        new = sample(MallowsSpec(rankings[-1], theta, kind), rng, method=method)
        d_hist.append(float(distance_of(new, rankings[-1], kind)))
        mu_hist.append(mu)
        rankings.append(new)
    if n_clamped and len(rankings) > 2:
        warnings.warn(
            f"{n_clamped} conditional means reached the uniform bound and were clamped",
            LinkClampWarning,
            stacklevel=2,
        )

    kept = np.array([r.ranks for r in rankings[burn:]], dtype=float)
    series = RankingSeries(kept)
    off = m + burn
    mu_kept = np.array(mu_hist[off : off + n - 1])
    theta_kept, clamped = solve_theta(mu_kept[m:], k, kind)
    path = ConditionalMeanPath(
        mu=mu_kept[m:], theta=np.asarray(theta_kept), start=m,
        presample=mu_kept[:m].copy(), n_clamped=int(np.sum(clamped)),
    )
    return series, path


def distance_of(a, b, kind: DistanceKind) -> int:
    return distance(a, b, kind)


def theoretical_acf_11(phi1: float, alpha1: float, sigma2_eps: float) -> TheoreticalAcf11:
    """Variance and autocorrelation of the distance series of an order-(1, 1) model."""
    if phi1 < 0 or alpha1 < 0:
        raise ValueError("coefficients must be non-negative")
    if phi1 + alpha1 >= 1:
        raise ValueError("phi1 + alpha1 must be < 1")
    if not sigma2_eps > 0:
        raise ValueError("innovation variance must be positive")
    s = phi1 + alpha1
    gamma0 = sigma2_eps * (1 - 2 * phi1 * alpha1 - alpha1**2) / (1 - s**2)
    return TheoreticalAcf11(gamma0, sigma2_eps, phi1, alpha1)


def empirical_acf_pacf(x, max_lag: int) -> tuple[np.ndarray, np.ndarray]:
    """Sample ACF (biased normalisation) and PACF via Durbin–Levinson.

    Both arrays have length ``max_lag + 1`` with a leading 1 at lag 0.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    if max_lag < 1 or n <= max_lag + 1:
        raise ValueError(f"need more than {max_lag + 1} observations for {max_lag} lags")
    xc = x - x.mean()
    c0 = xc @ xc / n
    if c0 <= 0:
        raise ValueError("constant series: autocorrelation undefined")
    acov = np.array([xc[: n - h] @ xc[h:] / n for h in range(max_lag + 1)])
    acf = acov / c0
    pacf = np.empty(max_lag + 1)
    pacf[0] = 1.0
    prev = np.empty(0)
    v = 1.0
    for h in range(1, max_lag + 1):
        kappa = (acf[h] - prev @ acf[h - 1 : 0 : -1]) / v if h > 1 else acf[1]
        cur = np.empty(h)
        cur[: h - 1] = prev - kappa * prev[::-1]
        cur[h - 1] = kappa
        v *= 1 - kappa**2
        pacf[h] = kappa
        prev = cur
    return acf, pacf
