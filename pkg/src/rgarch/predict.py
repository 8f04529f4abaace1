"""One-step-ahead forecasts and event probabilities for the next ranking."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import gammaln

from .link import solve_theta
from .mallows import MallowsSpec, log_pmf, oracle_enumerate, ORACLE_MAX_K
from .perms import DistanceKind, Permutation, as_distance
from .process import RankingSeries, mean_recursion

__all__ = [
    "RankEvent",
    "ISResult",
    "Forecast",
    "forecast_mean",
    "exact_event_prob",
    "is_event_prob",
    "spread_translation",
]


@dataclass(frozen=True)
class RankEvent:
    """Event that each listed item holds the listed rank.

    Items and ranks are 1-based, matching the ``item_i`` columns of a series.
    """

    fixed_positions: frozenset

    def __init__(self, fixed_positions):
        pairs = frozenset((int(i), int(r)) for i, r in fixed_positions)
        if not pairs:
            raise ValueError("an event needs at least one (item, rank) constraint")
        items = [i for i, _ in pairs]
        ranks = [r for _, r in pairs]
        if len(set(items)) != len(items):
            raise ValueError("an item is constrained to two different ranks")
        if len(set(ranks)) != len(ranks):
            raise ValueError("two items are constrained to the same rank")
        object.__setattr__(self, "fixed_positions", pairs)

    @classmethod
    def top_retained(cls, current, rank: int = 1) -> "RankEvent":
        """The item holding ``rank`` in ``current`` keeps it at the next step."""
        ranks = np.asarray(current)
        item = int(np.flatnonzero(ranks == rank)[0]) + 1
        return cls({(item, rank)})

    @property
    def k_I(self) -> int:
        return len(self.fixed_positions)

    def check(self, k: int) -> None:
        for i, r in self.fixed_positions:
            if not (1 <= i <= k and 1 <= r <= k):
                raise ValueError(f"constraint ({i}, {r}) outside 1..{k}")

    def indicator(self, perms) -> np.ndarray:
        """Boolean mask over a stack of rank vectors."""
        perms = np.asarray(perms)
        out = np.ones(perms.shape[:-1], dtype=bool)
        for i, r in self.fixed_positions:
            out &= perms[..., i - 1] == r
        return out

    def split(self, k: int):
        """0-based free items and 1-based free ranks, both sorted."""
        self.check(k)
        fixed_items = {i - 1 for i, _ in self.fixed_positions}
        fixed_ranks = {r for _, r in self.fixed_positions}
        free_items = np.array([j for j in range(k) if j not in fixed_items], dtype=int)
        free_ranks = np.array([r for r in range(1, k + 1) if r not in fixed_ranks], dtype=int)
        return free_items, free_ranks


class Forecast(NamedTuple):
    mu_next: float
    theta_next: float


@dataclass(frozen=True)
class ISResult:
    estimate: float
    std_error: float
    L_samples: int
    density_kind: str
    theta_proposal: float | None = None


def forecast_mean(fit, series) -> Forecast:
    """Conditional mean and spread of the distance to the next ranking.

    The last ``p + 1`` rankings must be complete. Feedback terms use the
    fitted mean path.
    """
    series = series if isinstance(series, RankingSeries) else RankingSeries(series)
    coef = fit.coef_hat
    p = len(coef.phi)
    if series.k != fit.k:
        raise ValueError(f"series has k={series.k}, model was fitted with k={fit.k}")
    tail = series.data[series.n - (p + 1):]
    if np.isnan(tail).any():
        raise ValueError(f"the last {p + 1} rankings must be complete to forecast")
    if series.is_complete:
        d = series.lag_distances(fit.distance)
        mu = mean_recursion(d, coef, fit.mu_path.presample if len(fit.mu_path.presample) else None)
    else:
        d = np.full(series.n - 1, np.nan)
        d[series.n - 1 - p:] = RankingSeries(tail).lag_distances(fit.distance)
        mu = np.r_[fit.mu_path.presample, fit.mu_path.mu]
    N = len(d)
    v = coef.phi0
    for i, ph in enumerate(coef.phi, start=1):
        v = v + ph * d[N - i]
    for j, al in enumerate(coef.alpha, start=1):
        v = v + al * mu[N - j]
    theta, _ = solve_theta(v, series.k, fit.distance)
    return Forecast(float(v), float(theta))


def exact_event_prob(event: RankEvent, mode, theta: float, distance="kendall") -> float:
    """Probability of ``event`` under ``Mallows(mode, θ)`` by summing over ``S_k``."""
    mode = Permutation(mode)
    k = mode.k
    if k > ORACLE_MAX_K:
        raise ValueError(f"enumeration limited to k <= {ORACLE_MAX_K}; use is_event_prob")
    event.check(k)
    tab = oracle_enumerate(k, theta, distance, mode=mode.ranks)
    return float(tab.pmf[event.indicator(tab.perms)].sum())


def spread_translation(theta: float, k: int, k_free: int, distance="kendall") -> float:
    """Spread for the free sub-ranking, scaled by the ratio of maximal distances."""
    if as_distance(distance) is DistanceKind.KENDALL:
        return theta * (k_free * (k_free - 1) / 2) / (k * (k - 1) / 2)
    return theta * k_free / k


def is_event_prob(
    event: RankEvent,
    mode,
    theta: float,
    distance="kendall",
    L_samples: int = 500,
    density_kind: str = "designed",
    rng=None,
) -> ISResult:
    """Importance-sampling estimate of the probability of ``event``.

    Draws only permutations satisfying the constraints. ``"naive"`` fills the
    free ranks uniformly; ``"designed"`` draws the free items from a Mallows
    law centred on their relative order in ``mode`` with a translated spread.
    """
    if density_kind not in ("naive", "designed"):
        raise ValueError("density_kind must be 'naive' or 'designed'")
    if int(L_samples) != L_samples or L_samples < 2:
        raise ValueError("L_samples must be an integer >= 2")
    mode = Permutation(mode)
    kind = as_distance(distance)
    k = mode.k
    target = MallowsSpec(mode, theta, kind)
    free_items, free_ranks = event.split(k)
    kf = len(free_items)
    rng = np.random.default_rng(rng)

    base = np.zeros(k, dtype=int)
    for i, r in event.fixed_positions:
        base[i - 1] = r
    if kf <= 1:
        # a single admissible permutation
        if kf == 1:
            base[free_items[0]] = free_ranks[0]
        w = math.exp(log_pmf(base, target))
        return ISResult(w, 0.0, int(L_samples), density_kind)

    draws = np.tile(base, (L_samples, 1))
    theta_star = None
    if density_kind == "naive":
        order = np.argsort(rng.random((L_samples, kf)), axis=1)
        draws[:, free_items] = free_ranks[order]
        log_g = -gammaln(kf + 1)
    else:
        # relabel free items to 1..kf keeping their relative order in the mode
        sub_mode = np.argsort(np.argsort(np.asarray(mode.ranks)[free_items])) + 1
        theta_star = spread_translation(theta, k, kf, kind)
        proposal = MallowsSpec(Permutation(sub_mode), theta_star, kind)
        sub = proposal.sample(rng, size=L_samples)
        draws[:, free_items] = free_ranks[sub - 1]
        log_g = log_pmf(sub, proposal)
    w = np.exp(log_pmf(draws, target) - log_g)
    est = float(w.mean())
    se = float(w.std(ddof=1) / math.sqrt(L_samples))
    return ISResult(est, se, int(L_samples), density_kind, theta_star)
