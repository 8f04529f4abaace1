"""Input validation helpers shared by the functional API and the estimator."""

from __future__ import annotations

import numpy as np

__all__ = ["check_rankings", "check_random_state", "check_order", "NotFittedError"]


class NotFittedError(ValueError, AttributeError):
    """Raised when a model is used before ``fit``."""


def check_rankings(X, allow_missing: bool = True, min_rows: int = 1) -> np.ndarray:
    """Validate an ``(n, k)`` matrix of 1-based ranks.

    Missing entries are NaN. Each row must hold distinct integer ranks in
    ``1..k`` on its observed entries.

    Returns
    -------
    ndarray of float64, shape (n, k)
    """
    if hasattr(X, "data") and hasattr(X, "k") and not isinstance(X, np.ndarray):
        X = X.data  # RankingSeries
    arr = np.array(X, dtype=float, copy=True)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-d array of rankings, got shape {arr.shape}")
    n, k = arr.shape
    if k < 2:
        raise ValueError("rankings need at least two items")
    if n < min_rows:
        raise ValueError(f"need at least {min_rows} rankings, got {n}")
    if np.isinf(arr).any():
        raise ValueError("rankings contain infinite values")
    missing = np.isnan(arr)
    if missing.any() and not allow_missing:
        rows = np.flatnonzero(missing.any(axis=1))
        raise ValueError(
            f"rankings contain missing entries (first at row {rows[0]}); "
            "use the Monte Carlo EM fit for incomplete data"
        )
    obs = arr[~missing]
    if np.any(obs != np.round(obs)):
        raise ValueError("ranks must be integers")
    if np.any((obs < 1) | (obs > k)):
        raise ValueError(f"ranks must lie in 1..{k}")
    filled = np.where(missing, 0, arr).astype(np.int64)
    for t in range(n):
        row = filled[t][filled[t] > 0]
        if len(np.unique(row)) != len(row):
            raise ValueError(f"row {t} repeats a rank: {arr[t]}")
    return arr


def check_random_state(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def check_order(p: int, q: int) -> tuple[int, int]:
    if int(p) != p or int(q) != q or p < 0 or q < 0:
        raise ValueError(f"orders must be non-negative integers, got ({p}, {q})")
    return int(p), int(q)
