"""Permutation arithmetic and right-invariant distances on rankings.

A ranking of ``k`` items is stored as a vector of 1-based ranks: ``ranks[i]``
is the rank given to item ``i + 1``. Batch helpers accept arrays whose last
axis holds such rank vectors.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterator, Sequence, Union

import numpy as np

__all__ = [
    "DistanceKind",
    "Permutation",
    "PartialRanking",
    "as_distance",
    "identity",
    "all_permutations",
    "compose",
    "inverse",
    "kendall_distance",
    "hamming_distance",
    "distance",
    "kendall_distances",
    "hamming_distances",
    "distances",
    "inversion_count",
    "enumerate_completions",
    "random_completion",
    "MAX_ENUMERATED_MISSING",
]

MAX_ENUMERATED_MISSING = 10


class DistanceKind(str, Enum):
    KENDALL = "kendall"
    HAMMING = "hamming"

    def max_distance(self, k: int) -> int:
        """Largest attainable distance between two rankings of ``k`` items."""
        if self is DistanceKind.KENDALL:
            return k * (k - 1) // 2
        return k


def as_distance(kind) -> DistanceKind:
    if isinstance(kind, DistanceKind):
        return kind
    try:
        return DistanceKind(str(kind).lower())
    except ValueError:
        raise ValueError(
            f"unknown distance {kind!r}; expected 'kendall' or 'hamming'"
        ) from None


@dataclass(frozen=True)
class Permutation:
    """A complete ranking; ``ranks[i]`` is the rank of item ``i + 1``."""

    ranks: tuple[int, ...]

    def __init__(self, ranks: Sequence[int]):
        values = tuple(int(r) for r in ranks)
        k = len(values)
        if k < 2:
            raise ValueError("a ranking needs at least two items")
        if sorted(values) != list(range(1, k + 1)):
            raise ValueError(f"{values} is not a permutation of 1..{k}")
        object.__setattr__(self, "ranks", values)

    @property
    def k(self) -> int:
        return len(self.ranks)

    def __len__(self) -> int:
        return len(self.ranks)

    def __iter__(self):
        return iter(self.ranks)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.ranks, dtype=dtype)

    def inverse(self) -> "Permutation":
        return inverse(self)

    def compose(self, other: "Permutation") -> "Permutation":
        return compose(self, other)

    def to_partial(self) -> "PartialRanking":
        return PartialRanking(self.ranks)


PermLike = Union[Permutation, Sequence[int], np.ndarray]


@dataclass(frozen=True)
class PartialRanking:
    """A ranking with unobserved slots (``None`` entries).

    Observed entries must be distinct ranks in ``1..k``; completions assign
    the unused ranks to the missing items.
    """

    entries: tuple[int | None, ...]

    def __init__(self, entries: Sequence):
        values = []
        for e in entries:
            if e is None or (isinstance(e, float) and math.isnan(e)):
                values.append(None)
            else:
                if float(e) != int(e):
                    raise ValueError(f"rank {e!r} is not an integer")
                values.append(int(e))
        k = len(values)
        if k < 2:
            raise ValueError("a ranking needs at least two items")
        observed = [v for v in values if v is not None]
        if len(set(observed)) != len(observed):
            raise ValueError(f"repeated rank in {tuple(values)}")
        if any(v < 1 or v > k for v in observed):
            raise ValueError(f"ranks in {tuple(values)} must lie in 1..{k}")
        object.__setattr__(self, "entries", tuple(values))

    @classmethod
    def from_array(cls, row) -> "PartialRanking":
        return cls([None if np.isnan(v) else v for v in np.asarray(row, dtype=float)])

    @property
    def k(self) -> int:
        return len(self.entries)

    @property
    def n_mis(self) -> int:
        return sum(e is None for e in self.entries)

    @property
    def is_complete(self) -> bool:
        return self.n_mis == 0

    def missing_items(self) -> list[int]:
        """0-based indices of the unobserved items."""
        return [i for i, e in enumerate(self.entries) if e is None]

    def free_ranks(self) -> list[int]:
        used = {e for e in self.entries if e is not None}
        return [r for r in range(1, self.k + 1) if r not in used]

    def n_completions(self) -> int:
        return math.factorial(self.n_mis)

    def to_array(self) -> np.ndarray:
        return np.array([np.nan if e is None else e for e in self.entries], dtype=float)

    def to_permutation(self) -> Permutation:
        if not self.is_complete:
            raise ValueError("ranking has missing entries")
        return Permutation(self.entries)


def _ranks(a: PermLike) -> np.ndarray:
    if isinstance(a, Permutation):
        return np.asarray(a.ranks, dtype=np.int64)
    arr = np.asarray(a)
    if arr.ndim != 1:
        raise ValueError("expected a single rank vector")
    return arr.astype(np.int64)


def _check_same_k(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape[-1] != b.shape[-1]:
        raise ValueError(
            f"dimension mismatch: rankings of {a.shape[-1]} and {b.shape[-1]} items"
        )


def identity(k: int) -> Permutation:
    return Permutation(range(1, k + 1))


def all_permutations(k: int) -> Iterator[Permutation]:
    for p in itertools.permutations(range(1, k + 1)):
        yield Permutation(p)


def compose(a: PermLike, b: PermLike) -> Permutation:
    """Return ``a∘b``, i.e. ``(a∘b)(i) = a(b(i))``."""
    ra, rb = _ranks(a), _ranks(b)
    _check_same_k(ra, rb)
    return Permutation(ra[rb - 1])


def inverse(a: PermLike) -> Permutation:
    ra = _ranks(a)
    inv = np.empty_like(ra)
    inv[ra - 1] = np.arange(1, len(ra) + 1)
    return Permutation(inv)


def _merge_count(seq: list) -> tuple[list, int]:
    if len(seq) <= 1:
        return seq, 0
    mid = len(seq) // 2
    left, a = _merge_count(seq[:mid])
    right, b = _merge_count(seq[mid:])
    merged = []
    count = a + b
    i = j = 0
    n_left = len(left)
    while i < n_left and j < len(right):
        if left[i] <= right[j]:
            merged.append(left[i])
            i += 1
        else:
            merged.append(right[j])
            count += n_left - i
            j += 1
    merged.extend(left[i:])
    merged.extend(right[j:])
    return merged, count


def inversion_count(seq: Sequence[int]) -> int:
    """Number of pairs ``i < j`` with ``seq[i] > seq[j]`` (merge sort, O(k log k))."""
    return _merge_count(list(seq))[1]


def kendall_distance(a: PermLike, b: PermLike) -> int:
    """Number of item pairs ranked in opposite order by ``a`` and ``b``.

    Computed as the inversion count of ``a∘b⁻¹`` read in rank order of ``b``.
    """
    ra, rb = _ranks(a), _ranks(b)
    _check_same_k(ra, rb)
    order_b = np.argsort(rb)
    return inversion_count(ra[order_b].tolist())


def hamming_distance(a: PermLike, b: PermLike) -> int:
    ra, rb = _ranks(a), _ranks(b)
    _check_same_k(ra, rb)
    return int(np.count_nonzero(ra != rb))


def distance(a: PermLike, b: PermLike, kind="kendall") -> int:
    if as_distance(kind) is DistanceKind.KENDALL:
        return kendall_distance(a, b)
    return hamming_distance(a, b)


def kendall_distances(a, b) -> np.ndarray:
    """Vectorised Kendall distance between stacks of rank vectors.

    ``a`` and ``b`` broadcast against each other over leading axes.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    _check_same_k(a, b)
    k = a.shape[-1]
    iu, ju = np.triu_indices(k, 1)
    da = np.sign(a[..., iu] - a[..., ju])
    db = np.sign(b[..., iu] - b[..., ju])
    return np.count_nonzero(da != db, axis=-1)


def hamming_distances(a, b) -> np.ndarray:
    a = np.asarray(a)
    b = np.asarray(b)
    _check_same_k(a, b)
    return np.count_nonzero(a != b, axis=-1)


def distances(a, b, kind="kendall") -> np.ndarray:
    if as_distance(kind) is DistanceKind.KENDALL:
        return kendall_distances(a, b)
    return hamming_distances(a, b)


def enumerate_completions(p: PartialRanking) -> list[Permutation]:
    """All complete rankings compatible with ``p`` (there are ``n_mis!``)."""
    if not isinstance(p, PartialRanking):
        p = PartialRanking(p)
    if p.n_mis > MAX_ENUMERATED_MISSING:
        raise ValueError(
            f"{p.n_mis} missing entries exceeds the enumeration guard "
            f"({MAX_ENUMERATED_MISSING}); use random_completion instead"
        )
    slots = p.missing_items()
    free = p.free_ranks()
    base = list(p.entries)
    out = []
    for arrangement in itertools.permutations(free):
        for slot, r in zip(slots, arrangement):
            base[slot] = r
        out.append(Permutation(base))
    return out


def random_completion(p: PartialRanking, rng=None) -> Permutation:
    """Uniform draw from the completions of ``p``."""
    if not isinstance(p, PartialRanking):
        p = PartialRanking(p)
    if p.is_complete:
        return p.to_permutation()
    rng = np.random.default_rng(rng)
    slots = p.missing_items()
    free = rng.permutation(p.free_ranks())
    base = list(p.entries)
    for slot, r in zip(slots, free):
        base[slot] = int(r)
    return Permutation(base)
