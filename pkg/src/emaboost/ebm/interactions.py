"""FAST screening of feature pairs by quadrant RSS reduction."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .. import kernels


@dataclass(frozen=True)
class InteractionRanking:
    """Pairs ``(i, j)`` with ``i < j`` sorted by non-increasing strength."""

    entries: tuple[tuple[tuple[int, int], float], ...] = field(default_factory=tuple)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return [p for p, _ in self.entries]

    @property
    def strengths(self) -> np.ndarray:
        return np.array([s for _, s in self.entries], dtype=np.float64)

    def top(self, k: int) -> list[tuple[int, int]]:
        return self.pairs[:k]


def rank_pairs(X: np.ndarray, n_levels, residuals, max_pairs: int | None = None) -> InteractionRanking:
    """Score every feature pair and return the ranking, truncated to ``max_pairs``.

    The strength of a pair is the largest drop in residual sum of squares
    achievable by a predictor that is constant on each of the four quadrants
    of one cut per axis. Each pair costs one 2-D histogram pass over the
    rows plus a prefix-sum scan over the ``levels_i * levels_j`` cells.
    """
    X = np.ascontiguousarray(X, dtype=np.int32)
    d = X.shape[1]
    if d < 2:
        return InteractionRanking()
    pairs = np.array(list(combinations(range(d), 2)), dtype=np.int32)
    r = np.ascontiguousarray(residuals, dtype=np.float64)
    strengths = kernels.fast_strengths(X, r, np.ascontiguousarray(n_levels, dtype=np.int32), pairs)
    strengths = np.maximum(np.asarray(strengths), 0.0)
    order = sorted(range(len(pairs)), key=lambda k: (-strengths[k], pairs[k, 0], pairs[k, 1]))
    if max_pairs is not None:
        order = order[:max_pairs]
    return InteractionRanking(tuple(((int(pairs[k, 0]), int(pairs[k, 1])), float(strengths[k])) for k in order))


def fast_rank_interactions(train, residuals, max_pairs: int | None = None) -> InteractionRanking:
    """Rank interactions of a :class:`~emaboost.ema.SupervisedSet` given main-effect residuals."""
    return rank_pairs(train.features, train.n_levels, residuals, max_pairs)
