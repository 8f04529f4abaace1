"""Monte Carlo EM for ranking series with missing entries.

Missing ranks in a row are completed uniformly over the ranks the row has
not used. Each iteration redraws ``M`` completed data sets, maximises the
average complete-data log-likelihood ``Q`` and checks convergence through a
Chebyshev-type interval for the change in log-likelihood.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .inference import (
    FitOptions,
    FitResult,
    _evaluate,
    _information_criteria,
    fit_mle,
    maximize,
    standard_errors,
)
from .link import solve_theta
from .mallows import log_psi
from .perms import DistanceKind, as_distance, distances
from .process import (
    Coefficients,
    ConditionalMeanPath,
    ModelOrder,
    RankingSeries,
    mean_recursion,
)

__all__ = [
    "MCEMConfig",
    "MCEMIteration",
    "MCEMTrace",
    "Completions",
    "impute_completions",
    "posterior_completions",
    "q_function",
    "delta_ll_estimate",
    "mcem_fit",
    "inject_missing",
]


@dataclass(frozen=True)
class MCEMConfig:
    """Monte Carlo EM settings.

    Parameters
    ----------
    M0 : int
        Initial number of imputed data sets.
    epsilon : float
        Precision target for the standard error of the log-likelihood change.
    L : float
        Half-width multiplier of the convergence interval.
    max_iters : int
        Iteration cap; the fit is flagged unconverged when reached.
    seed : int or None
        Master seed. ``None`` draws fresh entropy, recorded in the trace.
    completion : {"posterior", "uniform"}
        E-step law. ``"posterior"`` draws uniform completions and moves them
        towards their conditional law under the current coefficients with
        ``sweeps`` Metropolis sweeps; ``"uniform"`` keeps the raw uniform
        draws.
    sweeps : int
        Metropolis sweeps per E-step for ``completion="posterior"``.
    """

    M0: int = 200
    epsilon: float = 0.05
    L: float = 4.0
    max_iters: int = 50
    seed: int | None = None
    completion: str = "posterior"
    sweeps: int = 20

    def __post_init__(self):
        if int(self.M0) != self.M0 or self.M0 < 2:
            raise ValueError("M0 must be an integer >= 2")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.L > 0:
            raise ValueError("L must be positive")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ValueError("max_iters must be a positive integer")
        if self.completion not in ("posterior", "uniform"):
            raise ValueError("completion must be 'posterior' or 'uniform'")
        if int(self.sweeps) != self.sweeps or self.sweeps < 0:
            raise ValueError("sweeps must be a non-negative integer")


@dataclass(frozen=True)
class MCEMIteration:
    r: int
    beta: tuple
    M: int
    eta: float
    sigma: float
    interval: tuple[float, float]
    accepted: bool
    q_value: float
    sigma_ratio: float

    def as_row(self, names) -> dict:
        row = {
            "r": self.r, "M": self.M, "eta": self.eta, "sigma": self.sigma,
            "lower": self.interval[0], "upper": self.interval[1],
            "accepted": self.accepted, "q_value": self.q_value,
            "sigma_ratio": self.sigma_ratio,
        }
        row.update(zip(names, self.beta))
        return row


@dataclass
class MCEMTrace:
    """Per-iteration records; ``beta0`` is the starting point."""

    beta0: tuple
    seed: int
    records: list[MCEMIteration] = field(default_factory=list)
    converged: bool = False

    @property
    def n_iter(self) -> int:
        return len(self.records)

    @property
    def M(self) -> np.ndarray:
        return np.array([rec.M for rec in self.records], dtype=int)


# -- E-step --------------------------------------------------------------------


def _row_generator(seed: int, r: int, row: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, r, row]))


def _complete_rows(series: RankingSeries, M: int, rng_for_row) -> np.ndarray:
    data = series.data
    out = np.broadcast_to(data, (M,) + data.shape).copy()
    k = series.k
    for t in series.missing_rows:
        row = data[t]
        slots = np.flatnonzero(np.isnan(row))
        free = np.setdiff1d(np.arange(1, k + 1), row[~np.isnan(row)].astype(int))
        rng = rng_for_row(int(t))
        # argsort of row-major uniforms: the first M draws do not depend on M
        perm = np.argsort(rng.random((M, len(free))), axis=1)
        out[:, t, slots] = free[perm]
    return out


@dataclass(frozen=True)
class Completions:
    """``M`` completed copies of a series, stored as an ``(M, n, k)`` array."""

    data: np.ndarray
    source: RankingSeries

    @property
    def M(self) -> int:
        return self.data.shape[0]

    def __len__(self) -> int:
        return self.M

    def series(self, j: int) -> RankingSeries:
        return RankingSeries(self.data[j])

    def __iter__(self):
        return (self.series(j) for j in range(self.M))

    def affected_pairs(self) -> np.ndarray:
        """Boolean mask over the ``n - 1`` lag distances touched by missingness."""
        miss = np.zeros(self.source.n, dtype=bool)
        miss[self.source.missing_rows] = True
        return miss[1:] | miss[:-1]

    def distances(self, kind) -> np.ndarray:
        """Lag distances of every completion, shape ``(M, n - 1)``."""
        kind = as_distance(kind)
        aff = self.affected_pairs()
        d = np.empty((self.M, self.source.n - 1))
        if (~aff).any():
            base = self.source.data
            idx = np.flatnonzero(~aff)
            d[:, idx] = distances(base[idx + 1], base[idx], kind)[None, :]
        if aff.any():
            idx = np.flatnonzero(aff)
            d[:, idx] = distances(self.data[:, idx + 1], self.data[:, idx], kind)
        return d


def impute_completions(series, M: int, rng=None, *, iteration: int = 0) -> Completions:
    """Draw ``M`` uniform completions of every incomplete row.

    Parameters
    ----------
    rng : int, Generator or None
        An integer seed gives one stream per ``(seed, iteration, row)``, so a
        larger ``M`` extends rather than reshuffles the draws. A Generator is
        consumed directly, row by row.
    """
    series = series if isinstance(series, RankingSeries) else RankingSeries(series)
    if M < 1:
        raise ValueError("M must be positive")
    if isinstance(rng, (int, np.integer)):
        seed = int(rng)
        return Completions(_complete_rows(series, M, lambda t: _row_generator(seed, iteration, t)), series)
    gen = np.random.default_rng(rng)
    return Completions(_complete_rows(series, M, lambda t: gen), series)


def _window_length(coef: Coefficients, N: int) -> int:
    """Terms whose value can change when one row changes.

    Without feedback this is exact. With feedback the effect on later means
    decays like ``(Σα)^(j/q)``; the window stops once it is below 1e-12.
    """
    p, q = len(coef.phi), len(coef.alpha)
    J = p + 2
    if q:
        rate = sum(coef.alpha)
        J += N if rate >= 1 else q * math.ceil(math.log(1e-12) / math.log(max(rate, 1e-6)))
    return min(J, N)


def _window_loglik(d, mu, rows, J, coef, k, kind, m):
    """Sum of likelihood terms ``s = t-1 .. t-2+J`` for each row ``t``; shape (M, G)."""
    M, N = d.shape
    G = len(rows)
    phi, alpha = np.asarray(coef.phi), np.asarray(coef.alpha)
    p, q = len(phi), len(alpha)
    local = np.empty((M, G, J))
    total = np.zeros((M, G))
    first = rows - 1
    for j in range(J):
        s = first + j
        valid = (s >= m) & (s < N)
        sc = np.clip(s, 0, N - 1)
        v = np.full((M, G), coef.phi0)
        for i in range(1, p + 1):
            v = v + phi[i - 1] * d[:, np.clip(sc - i, 0, N - 1)]
        for i in range(1, q + 1):
            prev = np.clip(sc - i, 0, N - 1)
            inside = (j - i) >= 0
            fed = local[:, :, j - i] if inside else mu[:, prev]
            v = v + alpha[i - 1] * fed
        local[:, :, j] = v
        if not valid.any():
            continue
        mu_v = v[:, valid]
        th, _ = solve_theta(mu_v, k, kind)
        total[:, valid] += -th * d[:, sc[valid]] - log_psi(th, k, kind)
    return total


def _row_groups(rows: np.ndarray, gap: int) -> list[np.ndarray]:
    """Split sorted rows into groups whose members are at least ``gap`` apart."""
    groups: list[list[int]] = []
    last: list[int] = []
    for t in rows:
        for g, tail in enumerate(last):
            if t - tail >= gap:
                groups[g].append(int(t))
                last[g] = int(t)
                break
        else:
            groups.append([int(t)])
            last.append(int(t))
    return [np.array(g) for g in groups]


def posterior_completions(series, M: int, beta, order: ModelOrder, distance="kendall", rng=0, *,
                          iteration: int = 0, sweeps: int = 20, presample=None,
                          init=None) -> Completions:
    """Completions drawn from their conditional law given the observed entries.

    Chains start from :func:`impute_completions`, or from ``init`` (an
    ``(M', n, k)`` stack of earlier completions, reused cyclically when
    ``M > M'``), and run ``sweeps`` Metropolis sweeps over the incomplete rows. Proposals alternate between a
    fresh uniform completion of the row and a swap of two of its missing
    ranks; both are symmetric, so acceptance uses the likelihood ratio only.
    Rows far enough apart not to share a likelihood term move together.
    """
    series = series if isinstance(series, RankingSeries) else RankingSeries(series)
    kind = as_distance(distance)
    coef = _as_coef(beta, order)
    comp = impute_completions(series, M, rng, iteration=iteration)
    if init is not None:
        init = np.asarray(init)
        if init.ndim != 3 or init.shape[1:] != (series.n, series.k):
            raise ValueError(f"init must have shape (M', {series.n}, {series.k})")
        # observed entries are untouched, so only the missing ones are carried over
        carried = init[np.arange(M) % len(init)]
        hole = np.isnan(series.data)
        data = comp.data.copy()
        data[:, hole] = carried[:, hole]
        comp = Completions(data, series)
    rows = series.missing_rows
    if sweeps == 0 or len(rows) == 0:
        return comp
    seed = int(rng) if isinstance(rng, (int, np.integer)) else None
    gen = (np.random.default_rng(np.random.SeedSequence([seed, iteration, series.n + 1]))
           if seed is not None else np.random.default_rng(rng))
    X = comp.data.copy()
    k, n = series.k, series.n
    N = n - 1
    m = order.m
    d = distances(X[:, 1:], X[:, :-1], kind).astype(float)
    if presample is None:
        aff = comp.affected_pairs()
        presample = _presample(series, d, aff, m)
    mu = mean_recursion(d, coef, presample)
    J = _window_length(coef, N)
    groups = _row_groups(rows, J + 1)
    slots = {int(t): np.flatnonzero(np.isnan(series.data[t])) for t in rows}
    free = {int(t): np.setdiff1d(np.arange(1, k + 1),
                                 series.data[t][~np.isnan(series.data[t])].astype(int)) for t in rows}

    for sweep in range(sweeps):
        swap = sweep % 2 == 1
        for G in groups:
            prop_rows = X[:, G, :].copy()
            for gi, t in enumerate(G):
                sl, fr = slots[int(t)], free[int(t)]
                if swap and len(sl) >= 2:
                    a = gen.integers(len(sl), size=M)
                    b = (a + gen.integers(1, len(sl), size=M)) % len(sl)
                    cur = prop_rows[:, gi, :]
                    ia, ib = sl[a], sl[b]
                    va = cur[np.arange(M), ia].copy()
                    cur[np.arange(M), ia] = cur[np.arange(M), ib]
                    cur[np.arange(M), ib] = va
                else:
                    prop_rows[:, gi, sl] = fr[np.argsort(gen.random((M, len(fr))), axis=1)]
            d_new = d.copy()
            left = G > 0
            right = G < N
            if left.any():
                d_new[:, G[left] - 1] = distances(prop_rows[:, left], X[:, G[left] - 1], kind)
            if right.any():
                d_new[:, G[right]] = distances(X[:, G[right] + 1], prop_rows[:, right], kind)
            old = _window_loglik(d, mu, G, J, coef, k, kind, m)
            new = _window_loglik(d_new, mu, G, J, coef, k, kind, m)
            with np.errstate(invalid="ignore"):
                accept = np.log(gen.random(old.shape)) < new - old
            if not accept.any():
                continue
            ci, gi = np.nonzero(accept)
            X[ci, G[gi]] = prop_rows[ci, gi]
            for side, offset in ((left, -1), (right, 0)):
                hit = side[gi]
                d[ci[hit], G[gi[hit]] + offset] = d_new[ci[hit], G[gi[hit]] + offset]
            if order.q:
                mu = mean_recursion(d, coef, presample)
    return Completions(X, series)


# -- Q-function and likelihood change -------------------------------------------


@dataclass(frozen=True)
class _Stack:
    d: np.ndarray
    k: int
    kind: DistanceKind
    presample: np.ndarray
    shared: np.ndarray


def _presample(series: RankingSeries, d_all: np.ndarray, aff: np.ndarray, m: int) -> np.ndarray:
    # observed lag distances only; fall back to the imputed average
    vals = d_all[0, ~aff] if (~aff).any() else d_all.ravel()
    return np.full(m, float(vals.mean()))


def _shared_terms(aff: np.ndarray, order: ModelOrder) -> np.ndarray:
    """Likelihood terms ``s = m..N-1`` identical across completions."""
    N = len(aff)
    m = order.m
    if order.q > 0:
        touched = np.cumsum(aff) > 0
    else:
        touched = aff.copy()
        for i in range(1, order.p + 1):
            touched[i:] |= aff[:-i]
    return ~touched[m:N]


def _stack(completions: Completions, order: ModelOrder, distance) -> _Stack:
    kind = as_distance(distance)
    d = completions.distances(kind)
    if d.shape[1] <= order.m:
        raise ValueError(f"series too short for order ({order.p}, {order.q})")
    aff = completions.affected_pairs()
    return _Stack(d, completions.source.k, kind, _presample(completions.source, d, aff, order.m),
                  _shared_terms(aff, order))


def _per_replicate(stack: _Stack, coef: Coefficients) -> np.ndarray:
    return _evaluate(stack.d, coef, stack.k, stack.kind, stack.presample, stack.shared, grad=False).per_replicate


def _as_coef(beta, order: ModelOrder) -> Coefficients:
    return beta if isinstance(beta, Coefficients) else Coefficients.from_array(beta, order)


def q_function(beta, completions: Completions, order: ModelOrder, distance="kendall") -> float:
    """Average complete-data log-likelihood over the completions."""
    st = _stack(completions, order, distance)
    return float(_per_replicate(st, _as_coef(beta, order)).mean())


def _delta(stack: _Stack, new: Coefficients, old: Coefficients):
    diff = _per_replicate(stack, new) - _per_replicate(stack, old)
    M = len(diff)
    eta = float(diff.mean())
    sigma = float(diff.std(ddof=1) / math.sqrt(M)) if M > 1 else 0.0
    with np.errstate(over="ignore"):
        ratio_var = float(np.var(np.exp(-diff), ddof=1)) if M > 1 else 0.0
    return eta, sigma, ratio_var


def delta_ll_estimate(completions, beta_new, beta_old, order, distance="kendall") -> tuple[float, float]:
    """Mean and standard error of the per-completion log-likelihood change."""
    if completions.M < 2:
        raise ValueError("need at least two completions")
    st = _stack(completions, order, distance)
    eta, sigma, _ = _delta(st, _as_coef(beta_new, order), _as_coef(beta_old, order))
    return eta, sigma


# -- driver ----------------------------------------------------------------------


def _m_step(stack: _Stack, order: ModelOrder, start: np.ndarray, options: FitOptions) -> np.ndarray:
    def objective(beta, need_grad):
        ev = _evaluate(stack.d, Coefficients.from_array(beta, order), stack.k, stack.kind,
                       stack.presample, stack.shared, grad=need_grad)
        return ev.value, ev.grad

    beta, _, _, _ = maximize(objective, [start], order, options)
    return beta


def _has_complete_pair(series: RankingSeries) -> bool:
    ok = ~np.isnan(series.data).any(axis=1)
    return bool((ok[1:] & ok[:-1]).any())


def _mcem_result(stack: _Stack, order: ModelOrder, beta: np.ndarray, converged: bool, message: str) -> FitResult:
    coef = Coefficients.from_array(beta, order)
    ev = _evaluate(stack.d, coef, stack.k, stack.kind, stack.presample, stack.shared)
    # information averaged over the final completions
    K = np.einsum("jmt,imt->ji", ev.X / ev.var, ev.X) / stack.d.shape[0]
    se, singular = standard_errors(K)
    m = order.m
    n_used = stack.d.shape[1] - m
    aic, bic = _information_criteria(ev.value, order.dim, n_used)
    mu_bar = ev.mu.mean(axis=0)
    path = ConditionalMeanPath(
        mu=mu_bar, theta=ev.theta.mean(axis=0), start=m, presample=stack.presample.copy(),
        n_clamped=int(ev.clamped.any(axis=0).sum()),
    )
    resid = (stack.d[:, m:] - ev.mu).mean(axis=0)
    return FitResult(
        coef_hat=coef, order=order, distance=stack.kind, k=stack.k, std_errors=se,
        loglik=ev.value, aic=aic, bic=bic, mu_path=path, residuals=resid, converged=converged,
        n_used=n_used, information=K, singular_information=singular, message=message,
        n_clamped=path.n_clamped,
    )


def mcem_fit(series, order: ModelOrder, distance="kendall", config: MCEMConfig | None = None,
             options: FitOptions | None = None) -> tuple[FitResult, MCEMTrace]:
    """Monte Carlo EM fit of a ranking series with missing entries.

    A complete series is handed to :func:`fit_mle` and reported as a single
    accepted iteration.
    """
    config = config or MCEMConfig()
    series = series if isinstance(series, RankingSeries) else RankingSeries(series)
    kind = as_distance(distance)
    seed = config.seed if config.seed is not None else int(np.random.SeedSequence().entropy % (2**63))

    if series.is_complete:
        fit = fit_mle(series, order, kind, options)
        beta = tuple(fit.coef_hat.to_array().tolist())
        trace = MCEMTrace(beta0=beta, seed=seed, converged=fit.converged)
        trace.records.append(MCEMIteration(1, beta, config.M0, 0.0, 0.0, (0.0, 0.0), True, fit.loglik, 0.0))
        return fit, trace
    if not _has_complete_pair(series):
        raise ValueError("series needs at least two consecutive complete rankings")

    # starting point: plain MLE on a single uniform completion
    first = RankingSeries(impute_completions(series, 1, seed, iteration=0).data[0])
    beta_old = fit_mle(series=first, order=order, distance=kind, options=options).coef_hat.to_array()
    trace = MCEMTrace(beta0=tuple(beta_old.tolist()), seed=seed)
    # the M-step is warm-started, so the derivative-free polish is skipped
    step_opts = replace(options or FitOptions(), polish=False, starts=None)

    M = config.M0
    stack = None
    comp = None
    for r in range(1, config.max_iters + 1):
        if config.completion == "posterior":
            # chains persist across iterations so burn-in accumulates
            comp = posterior_completions(series, M, beta_old, order, kind, seed, iteration=r,
                                         sweeps=config.sweeps,
                                         init=None if comp is None else comp.data)
        else:
            comp = impute_completions(series, M, seed, iteration=r)
        stack = _stack(comp, order, kind)
        beta_new = _m_step(stack, order, beta_old, step_opts)
        new = Coefficients.from_array(beta_new, order)
        eta, sigma, ratio_var = _delta(stack, new, Coefficients.from_array(beta_old, order))
        lo, hi = eta - config.L * sigma, eta + config.L * sigma
        accepted = sigma <= config.epsilon and (lo < 0.0 < hi or eta == sigma == 0.0)
        q_val = float(_per_replicate(stack, new).mean())
        sigma_ratio = math.sqrt(ratio_var) if np.isfinite(ratio_var) else math.inf
        trace.records.append(MCEMIteration(
            r, tuple(beta_new.tolist()), M, eta, sigma, (lo, hi), accepted, q_val, sigma_ratio,
        ))
        beta_old = beta_new
        if accepted:
            trace.converged = True
            break
        if sigma > config.epsilon:
            M += math.ceil(M / 3)
    msg = "converged" if trace.converged else f"no acceptance after {config.max_iters} iterations"
    return _mcem_result(stack, order, beta_old, trace.converged, msg), trace


# -- missingness injection -----------------------------------------------------------


def inject_missing(series, fraction: float, rng=None) -> RankingSeries:
    """Delete entries row by row until about ``fraction`` of all cells are missing.

    Each draw picks an unused row, then deletes a uniform number in
    ``{2, ..., k // 2}`` of its positions.
    """
    series = series if isinstance(series, RankingSeries) else RankingSeries(series)
    if not 0 <= fraction < 1:
        raise ValueError("fraction must lie in [0, 1)")
    rng = np.random.default_rng(rng)
    data = series.data.copy()
    n, k = data.shape
    hi = max(2, k // 2)
    target = fraction * n * k
    pool = list(range(n))
    removed = int(np.isnan(data).sum())
    while removed < target and pool:
        t = pool.pop(int(rng.integers(len(pool))))
        n_del = int(rng.integers(2, hi + 1))
        cols = rng.choice(k, size=min(n_del, k), replace=False)
        removed += int((~np.isnan(data[t, cols])).sum())
        data[t, cols] = np.nan
    return RankingSeries(data)
