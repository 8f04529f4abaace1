"""Mallows distribution under the Kendall and Hamming distances.

Everything is evaluated in log space. Spreads above ``theta_max(k) = 700 / k``
are treated as degenerate at the mode.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, logsumexp

from .perms import (
    DistanceKind,
    Permutation,
    as_distance,
    distances,
    identity,
)

__all__ = [
    "MallowsSpec",
    "MallowsMoments",
    "OracleTable",
    "theta_max",
    "log_psi",
    "psi",
    "mean_distance",
    "variance_distance",
    "moments",
    "distance_law",
    "log_pmf",
    "sample",
    "oracle_enumerate",
    "ORACLE_MAX_K",
]

ORACLE_MAX_K = 8
# Below this spread the Kendall closed forms cancel catastrophically; the
# per-component truncated-geometric sums are used instead.
_KENDALL_SMALL_THETA = 0.05


def theta_max(k: int) -> float:
    return 700.0 / k


def _check_theta(theta) -> np.ndarray:
    t = np.asarray(theta, dtype=float)
    if np.any(~(t > 0)):
        raise ValueError("theta must be strictly positive")
    return t


def _check_k(k: int) -> int:
    if int(k) != k or k < 2:
        raise ValueError(f"item count must be an integer >= 2, got {k!r}")
    return int(k)


def _scalar_or_array(x, like):
    return float(x) if np.ndim(like) == 0 else x


# -- Kendall -----------------------------------------------------------------


def _kendall_log_psi(t: np.ndarray, k: int) -> np.ndarray:
    l = np.arange(1, k + 1)
    lt = t[..., None] * l
    return np.sum(np.log(-np.expm1(-lt)), axis=-1) - k * np.log(-np.expm1(-t))


def _kendall_moments(t: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    mean = np.empty_like(t)
    var = np.empty_like(t)
    small = t < _KENDALL_SMALL_THETA
    j = np.arange(1, k + 1)
    if np.any(~small):
        tb = t[~small]
        jt = tb[:, None] * j
        with np.errstate(over="ignore"):
            mean[~small] = k / np.expm1(tb) - np.sum(j / np.expm1(jt), axis=1)
            var[~small] = k / (4.0 * np.sinh(tb / 2) ** 2) - np.sum(
                j**2 / (4.0 * np.sinh(jt / 2) ** 2), axis=1
            )
    if np.any(small):
        # d = sum of independent V_j on {0..j-1} with P(V_j = v) ∝ exp(-θv)
        ts = t[small]
        v = np.arange(k, dtype=float)
        w = np.exp(-ts[:, None] * v)
        s0 = np.cumsum(w, axis=1)
        s1 = np.cumsum(v * w, axis=1)
        s2 = np.cumsum(v**2 * w, axis=1)
        m = s1 / s0
        mean[small] = m.sum(axis=1)
        var[small] = (s2 / s0 - m**2).sum(axis=1)
    return mean, var


# -- Hamming -----------------------------------------------------------------


def _hamming_log_a(t: np.ndarray, k: int) -> np.ndarray:
    """log A(k, θ) with A(k, θ) = Σ_{j=0}^{k} (e^θ - 1)^j / j!."""
    j = np.arange(k + 1)
    terms = j * np.log(np.expm1(t))[..., None] - gammaln(j + 1)
    terms[..., 0] = 0.0
    return logsumexp(terms, axis=-1)


def _hamming_log_psi(t: np.ndarray, k: int) -> np.ndarray:
    return gammaln(k + 1) - k * t + _hamming_log_a(t, k)


@functools.lru_cache(maxsize=None)
def _hamming_log_counts(k: int) -> np.ndarray:
    """log #{π : d_H(π, id) = d} for d = 0..k (rencontres numbers)."""
    out = np.full(k + 1, -np.inf)
    for d in range(k + 1):
        if d == 1:
            continue
        alt = sum((-1) ** i / math.factorial(i) for i in range(d + 1))
        out[d] = gammaln(k + 1) - gammaln(d + 1) - gammaln(k - d + 1) + gammaln(d + 1) + math.log(alt)
    return out


def _hamming_law(t: np.ndarray, k: int) -> np.ndarray:
    d = np.arange(k + 1)
    logw = _hamming_log_counts(k) - t[..., None] * d
    return np.exp(logw - logsumexp(logw, axis=-1, keepdims=True))


def _hamming_moments(t: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    d = np.arange(k + 1)
    p = _hamming_law(t, k)
    mean = p @ d
    var = np.sum(p * (d - mean[..., None]) ** 2, axis=-1)
    return mean, var


# -- public closed forms -----------------------------------------------------


def log_psi(theta, k: int, distance="kendall"):
    """Log normalising constant of the Mallows law.

    Kendall: ``∏_{l=2}^k (1 - e^{-θl}) / (1 - e^{-θ})^{k-1}``;
    Hamming: ``k! e^{-kθ} A(k, θ)``.
    """
    k = _check_k(k)
    t = np.minimum(_check_theta(theta), theta_max(k))
    if as_distance(distance) is DistanceKind.KENDALL:
        out = _kendall_log_psi(t, k)
    else:
        out = _hamming_log_psi(t, k)
    return _scalar_or_array(out, theta)


def psi(theta, k: int, distance="kendall"):
    return np.exp(log_psi(theta, k, distance))


def moments(theta, k: int, distance="kendall"):
    """Mean and variance of ``d(π, π₀)`` as arrays (or floats)."""
    k = _check_k(k)
    t = np.atleast_1d(np.minimum(_check_theta(theta), theta_max(k))).astype(float)
    flat = t.ravel()
    if as_distance(distance) is DistanceKind.KENDALL:
        mean, var = _kendall_moments(flat, k)
    else:
        mean, var = _hamming_moments(flat, k)
    mean = mean.reshape(t.shape)
    var = var.reshape(t.shape)
    if np.ndim(theta) == 0:
        return float(mean[0]), float(var[0])
    return mean, var


def mean_distance(theta, k: int, distance="kendall"):
    """Link function ``g(θ) = E d(π, π₀)``; strictly decreasing in θ."""
    return moments(theta, k, distance)[0]


def variance_distance(theta, k: int, distance="kendall"):
    """``Var d(π, π₀)``, which equals ``-g'(θ)``."""
    return moments(theta, k, distance)[1]


def distance_law(theta: float, k: int, distance="kendall") -> np.ndarray:
    """Exact probabilities of ``d(π, π₀) = 0, 1, ..., max``."""
    k = _check_k(k)
    t = min(float(_check_theta(theta)), theta_max(k))
    if as_distance(distance) is DistanceKind.HAMMING:
        return _hamming_law(np.asarray(t), k)
    # Kendall: convolve the truncated geometric laws of the inversion table
    law = np.array([1.0])
    for j in range(1, k + 1):
        comp = np.exp(-t * np.arange(j))
        law = np.convolve(law, comp / comp.sum())
    return law


# -- distribution object -----------------------------------------------------


@dataclass(frozen=True)
class MallowsMoments:
    mean: float
    variance: float


@dataclass(frozen=True)
class MallowsSpec:
    """``Mallows(mode, theta)`` under a right-invariant distance."""

    mode: Permutation
    theta: float
    distance: DistanceKind = DistanceKind.KENDALL

    def __post_init__(self):
        if not isinstance(self.mode, Permutation):
            object.__setattr__(self, "mode", Permutation(self.mode))
        object.__setattr__(self, "distance", as_distance(self.distance))
        if not self.theta > 0:
            raise ValueError("theta must be strictly positive")
        object.__setattr__(self, "theta", float(self.theta))

    @property
    def k(self) -> int:
        return self.mode.k

    @property
    def degenerate(self) -> bool:
        return self.theta > theta_max(self.k)

    def moments(self) -> MallowsMoments:
        m, v = moments(self.theta, self.k, self.distance)
        return MallowsMoments(m, v)

    def log_pmf(self, pi):
        return log_pmf(pi, self)

    def sample(self, rng=None, size=None, method="auto"):
        return sample(self, rng=rng, size=size, method=method)


def log_pmf(pi, spec: MallowsSpec):
    """``-θ d(π, π₀) - log ψ(θ)``; ``pi`` may be a stack of rank vectors."""
    arr = np.asarray(pi)
    mode = np.asarray(spec.mode.ranks)
    if arr.shape[-1] != spec.k:
        raise ValueError(
            f"dimension mismatch: ranking of {arr.shape[-1]} items, mode has {spec.k}"
        )
    d = distances(arr, mode, spec.distance)
    if spec.degenerate:
        out = np.where(d == 0, 0.0, -np.inf)
    else:
        out = -spec.theta * d - log_psi(spec.theta, spec.k, spec.distance)
    return float(out) if np.ndim(out) == 0 else out


# -- samplers ----------------------------------------------------------------

_MH_CHAINS = 2000


def _kendall_exact(theta: float, k: int, size: int, rng) -> np.ndarray:
    """Rank vectors (relative to the identity mode) via the inversion table."""
    j = np.arange(1, k + 1)
    u = rng.random((size, k))
    # inverse CDF of P(V_j = v) ∝ exp(-θv), v in 0..j-1
    v = np.floor(np.log1p(u * np.expm1(-j * theta)) / -theta)
    v = np.clip(v, 0, j - 1).astype(np.int64)
    ranks = np.zeros((size, k), dtype=np.int64)
    for col in range(k):
        # item col+1 enters with relative rank (col+1) - V, pushing later ranks down
        r = (col + 1) - v[:, col]
        ranks[:, :col] += ranks[:, :col] >= r[:, None]
        ranks[:, col] = r
    return ranks


def _random_derangements(n_rows: int, d: int, rng) -> np.ndarray:
    out = np.empty((n_rows, d), dtype=np.int64)
    todo = np.arange(n_rows)
    base = np.arange(d)
    while todo.size:
        cand = np.argsort(rng.random((todo.size, d)), axis=1)
        ok = ~np.any(cand == base, axis=1)
        out[todo[ok]] = cand[ok]
        todo = todo[~ok]
    return out


def _hamming_exact(theta: float, k: int, size: int, rng) -> np.ndarray:
    """Draw the distance from its exact law, then a uniform permutation at that distance."""
    law = _hamming_law(np.asarray(theta), k)
    dvals = rng.choice(k + 1, size=size, p=law / law.sum())
    ranks = np.tile(np.arange(1, k + 1), (size, 1))
    for d in np.unique(dvals):
        if d == 0:
            continue
        rows = np.flatnonzero(dvals == d)
        pos = np.argsort(rng.random((rows.size, k)), axis=1)[:, :d]
        der = _random_derangements(rows.size, d, rng)
        moved = np.take_along_axis(pos, der, axis=1)
        ranks[rows[:, None], pos] = moved + 1
    return ranks


def _metropolis(theta: float, k: int, size: int, kind: DistanceKind, rng) -> np.ndarray:
    """Random-transposition Metropolis–Hastings around the identity mode.

    Burn-in ``50 k`` steps, ``k`` steps between retained draws, chains run in
    parallel from uniform starting points.
    """
    n_chains = min(size, _MH_CHAINS)
    per_chain = -(-size // n_chains)
    mode = np.arange(1, k + 1)
    state = np.argsort(rng.random((n_chains, k)), axis=1) + 1
    rows = np.arange(n_chains)
    if kind is DistanceKind.KENDALL:
        current = distances(state, mode, kind)
    out = np.empty((per_chain, n_chains, k), dtype=np.int64)
    burn, thin = 50 * k, k
    n_steps = burn + thin * per_chain
    kept = 0
    for step in range(1, n_steps + 1):
        i = rng.integers(k, size=n_chains)
        j = rng.integers(k, size=n_chains)
        si, sj = state[rows, i], state[rows, j]
        if kind is DistanceKind.HAMMING:
            before = (si != mode[i]).astype(int) + (sj != mode[j])
            after = (sj != mode[i]).astype(int) + (si != mode[j])
            delta = after - before
        else:
            prop = state.copy()
            prop[rows, i], prop[rows, j] = sj, si
            new = distances(prop, mode, kind)
            delta = new - current
        accept = np.log(rng.random(n_chains)) < -theta * delta
        acc = np.flatnonzero(accept)
        state[acc, i[acc]], state[acc, j[acc]] = sj[acc], si[acc]
        if kind is DistanceKind.KENDALL:
            current = np.where(accept, current + delta, current)
        if step > burn and (step - burn) % thin == 0:
            out[kept] = state
            kept += 1
    return out.reshape(-1, k)[:size]


def sample(spec: MallowsSpec, rng=None, size=None, method="auto"):
    """Draw from ``Mallows(mode, θ)``.

    Parameters
    ----------
    spec : MallowsSpec
    rng : numpy Generator, int seed or None
    size : int, optional
        Number of draws. ``None`` returns a single :class:`Permutation`,
        otherwise an ``(size, k)`` integer array of rank vectors.
    method : {"auto", "exact", "mh"}
        ``"exact"`` uses the inversion-table decomposition (Kendall) or the
        fixed-point law (Hamming). ``"mh"`` runs Metropolis–Hastings with
        random transpositions. ``"auto"`` picks ``"exact"``.
    """
    rng = np.random.default_rng(rng)
    n = 1 if size is None else int(size)
    k = spec.k
    if method not in ("auto", "exact", "mh"):
        raise ValueError(f"unknown sampling method {method!r}")
    if spec.degenerate:
        rel = np.tile(np.arange(1, k + 1), (n, 1))
    elif method == "mh":
        rel = _metropolis(spec.theta, k, n, spec.distance, rng)
    elif spec.distance is DistanceKind.KENDALL:
        rel = _kendall_exact(spec.theta, k, n, rng)
    else:
        rel = _hamming_exact(spec.theta, k, n, rng)
    # right-invariance: d(σ∘π₀, π₀) = d(σ, id)
    mode = np.asarray(spec.mode.ranks)
    draws = rel[:, mode - 1]
    if size is None:
        return Permutation(draws[0])
    return draws


# -- enumeration oracle ------------------------------------------------------


@dataclass(frozen=True)
class OracleTable:
    k: int
    theta: float
    distance: DistanceKind
    psi: float
    mean: float
    variance: float
    perms: np.ndarray = field(repr=False)
    dists: np.ndarray = field(repr=False)
    pmf: np.ndarray = field(repr=False)

    @property
    def log_psi(self) -> float:
        return math.log(self.psi)

    def prob(self, pi) -> float:
        idx = np.flatnonzero(np.all(self.perms == np.asarray(pi), axis=1))
        return float(self.pmf[idx[0]])


@functools.lru_cache(maxsize=16)
def _all_rank_vectors(k: int) -> np.ndarray:
    return np.array(list(itertools.permutations(range(1, k + 1))), dtype=np.int64)


def oracle_enumerate(k: int, theta: float, distance="kendall", mode=None) -> OracleTable:
    """Exact ψ, mean, variance and pmf by summing over all of ``S_k``."""
    k = _check_k(k)
    if k > ORACLE_MAX_K:
        raise ValueError(f"enumeration oracle limited to k <= {ORACLE_MAX_K}")
    kind = as_distance(distance)
    theta = float(_check_theta(theta))
    perms = _all_rank_vectors(k)
    mode = np.asarray(identity(k).ranks if mode is None else Permutation(mode).ranks)
    # brute-force distances, independent of the vectorised helpers
    if kind is DistanceKind.KENDALL:
        d = np.array(
            [
                sum(
                    (p[a] - p[b]) * (mode[a] - mode[b]) < 0
                    for a in range(k)
                    for b in range(a + 1, k)
                )
                for p in perms
            ]
        )
    else:
        d = np.array([sum(int(x != y) for x, y in zip(p, mode)) for p in perms])
    logw = -theta * d
    lz = logsumexp(logw)
    pmf = np.exp(logw - lz)
    mean = float(pmf @ d)
    var = float(pmf @ (d - mean) ** 2)
    return OracleTable(k, theta, kind, float(math.exp(lz)), mean, var, perms, d, pmf)
