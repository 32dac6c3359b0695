"""Equi-width discretization of continuous columns into ordinal levels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class Discretized:
    levels: np.ndarray
    edges: np.ndarray
    degenerate: bool = False


def equiwidth_edges(lo: float, hi: float, levels: int) -> np.ndarray:
    """Interior edges splitting ``[lo, hi]`` into ``levels`` equal-width bins."""
    width = (hi - lo) / levels
    return lo + width * np.arange(1, levels, dtype=np.float64)


def apply_edges(values, edges) -> np.ndarray:
    """Map values to level indices; ``edges[k-1] <= v < edges[k]`` is level ``k``."""
    return np.searchsorted(np.asarray(edges, dtype=np.float64),
                           np.asarray(values, dtype=np.float64),
                           side="right").astype(np.int32)


def discretize_equiwidth(values, levels: int) -> Discretized:
    """Bin ``values`` into ``levels`` equal-width bins spanning ``[min, max]``.

    The maximum value always lands in the top bin. Constant input cannot be
    binned; it comes back as all zeros with ``degenerate=True`` and no edges.
    """
    if levels < 2:
        raise ConfigError(f"levels must be >= 2, got {levels}")
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise ConfigError("cannot discretize an empty vector")
    lo, hi = float(arr.min()), float(arr.max())
    if hi <= lo:
        return Discretized(np.zeros(arr.shape, dtype=np.int32),
                           np.empty(0, dtype=np.float64), degenerate=True)
    edges = equiwidth_edges(lo, hi, levels)
    idx = np.minimum(apply_edges(arr, edges), levels - 1)
    return Discretized(idx, edges)
