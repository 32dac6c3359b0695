"""Export fitted lookup tables as shape functions for external plotting."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .model import EbmModel


@dataclass(frozen=True)
class MainShape:
    feature: int
    name: str
    contributions: np.ndarray
    importance: float


@dataclass(frozen=True)
class PairShape:
    features: tuple[int, int]
    name: str
    contributions: np.ndarray
    importance: float


@dataclass(frozen=True)
class ShapeFunctions:
    intercept: float
    mains: tuple[MainShape, ...]
    pairs: tuple[PairShape, ...]

    @property
    def total_importance(self) -> float:
        return float(sum(m.importance for m in self.mains) + sum(p.importance for p in self.pairs))


def _importance(table: np.ndarray, counts: np.ndarray | None) -> float:
    if counts is None or counts.sum() == 0:
        return float(np.mean(np.abs(table))) if table.size else 0.0
    return float(np.sum(counts * np.abs(table)) / counts.sum())


def extract_shape_functions(model: EbmModel) -> ShapeFunctions:
    """Per-term tables plus mean absolute contribution over the training rows."""
    names = [f.name for f in model.schema]
    mains = []
    for f, table in enumerate(model.main_terms):
        counts = model.main_counts[f] if f < len(model.main_counts) else None
        mains.append(MainShape(f, names[f], table.copy(), _importance(table, counts)))
    pairs = []
    for k, ((i, j), table) in enumerate(zip(model.pairs, model.pair_terms)):
        counts = model.pair_counts[k] if k < len(model.pair_counts) else None
        pairs.append(PairShape((i, j), f"{names[i]} x {names[j]}", table.copy(), _importance(table, counts)))
    return ShapeFunctions(model.intercept, tuple(mains), tuple(pairs))


def write_shape_csv(shapes: ShapeFunctions, path) -> None:
    """Columns: term, levels, contribution, importance. Pair levels read ``i|j``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["term", "levels", "contribution", "importance"])
        w.writerow(["intercept", "", repr(shapes.intercept), ""])
        for m in shapes.mains:
            for lv, v in enumerate(m.contributions):
                w.writerow([m.name, lv, repr(float(v)), repr(m.importance)])
        for p in shapes.pairs:
            for (a, b), v in np.ndenumerate(p.contributions):
                w.writerow([p.name, f"{a}|{b}", repr(float(v)), repr(p.importance)])
