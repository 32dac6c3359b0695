"""ROC-AUC, expanding-window cross-validation, grid search and report statistics."""

from __future__ import annotations

import csv
import itertools
import logging
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import ConfigError, CvInfeasibleError, DataError, UndefinedMetricError

_log = logging.getLogger(__name__)

DEFAULT_FOLDS = 4
TIE_TOL = 1e-12


def roc_auc(labels, scores) -> float:
    """Area under the ROC curve as the Mann-Whitney statistic (ties count 1/2)."""
    y = np.asarray(labels, dtype=np.float64).ravel()
    s = np.asarray(scores, dtype=np.float64).ravel()
    if y.shape != s.shape:
        raise DataError(f"{y.size} labels but {s.size} scores")
    pos = y > 0.5
    n_pos = int(pos.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("ROC-AUC is undefined when only one class is present")
    ranks = rankdata(s, method="average")
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def safe_auc(labels, scores) -> float | None:
    try:
        return roc_auc(labels, scores)
    except UndefinedMetricError:
        return None


# -- time-series cross-validation --------------------------------------------

@dataclass(frozen=True)
class CvPlan:
    """``k + 1`` contiguous blocks; split ``m`` trains on blocks ``0..m-1`` and tests on block ``m``."""

    n_folds: int
    blocks: tuple[range, ...]
    splits: tuple[tuple[range, range], ...]


def ts_cv_split(n_rows: int, k: int = DEFAULT_FOLDS) -> CvPlan:
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    if n_rows < k + 1:
        raise CvInfeasibleError(f"{n_rows} rows cannot form {k + 1} blocks")
    base, extra = divmod(n_rows, k + 1)
    sizes = [base + (1 if b < extra else 0) for b in range(k + 1)]
    bounds = np.concatenate([[0], np.cumsum(sizes)])
    blocks = tuple(range(int(bounds[b]), int(bounds[b + 1])) for b in range(k + 1))
    splits = tuple((range(0, blocks[m].start), blocks[m]) for m in range(1, k + 1))
    return CvPlan(k, blocks, splits)


def grouped_cv_splits(individual_ids, k: int = DEFAULT_FOLDS) -> list[tuple[np.ndarray, np.ndarray]]:
    """Expanding-window splits applied within each individual, then united.

    Used for pooled data: fold ``m`` trains on every individual's first ``m``
    blocks and tests on each individual's block ``m``. Individuals too short
    for ``k + 1`` blocks are left out of cross-validation.
    """
    ids = np.asarray(individual_ids, dtype=object)
    order: dict[Any, list[int]] = {}
    for pos, ind in enumerate(ids):
        order.setdefault(ind, []).append(pos)
    train = [[] for _ in range(k)]
    test = [[] for _ in range(k)]
    for rows in order.values():
        if len(rows) < k + 1:
            continue
        plan = ts_cv_split(len(rows), k)
        rows = np.asarray(rows)
        for m, (tr, te) in enumerate(plan.splits):
            train[m].append(rows[tr.start:tr.stop])
            test[m].append(rows[te.start:te.stop])
    if not train[0]:
        raise CvInfeasibleError("no individual has enough rows for pooled cross-validation")
    return [(np.concatenate(train[m]), np.concatenate(test[m])) for m in range(k)]


def cv_index_splits(data, k: int = DEFAULT_FOLDS) -> list[tuple[np.ndarray, np.ndarray]]:
    ids = getattr(data, "individual_ids", None)
    if ids is not None and len(set(ids)) > 1:
        return grouped_cv_splits(ids, k)
    plan = ts_cv_split(len(data), k)
    return [(np.arange(tr.start, tr.stop), np.arange(te.start, te.stop)) for tr, te in plan.splits]


# -- grid search -------------------------------------------------------------

EBM = "ebm"
LOGREG = "logreg"
STUDENT = "student"


def expand_grid(grid) -> list[dict[str, Any]]:
    """Accept a list of points or a mapping of parameter -> values (cartesian product)."""
    if isinstance(grid, Mapping):
        keys = list(grid)
        return [dict(zip(keys, combo)) for combo in itertools.product(*(list(grid[k]) for k in keys))]
    points = [dict(p) for p in grid]
    if not points:
        raise ConfigError("empty parameter grid")
    return points


@dataclass(frozen=True)
class CvRow:
    params: dict[str, Any]
    mean_auc: float | None
    fold_aucs: tuple[float, ...]
    n_skipped: int


@dataclass(frozen=True)
class GridResult:
    family: str
    best: dict[str, Any]
    best_auc: float
    table: tuple[CvRow, ...]
    n_skipped: int


def _ebm_scorer(base):
    from .ebm import EbmConfig, fit_ebm, predict_score

    base = base or EbmConfig()

    def prepare(point):
        return base.replace(**point)

    def fit_predict(cfg, train, test):
        return predict_score(fit_ebm(train, cfg), test.features)

    def complexity(cfg):
        return (cfg.n_interactions, cfg.n_rounds)

    return prepare, fit_predict, complexity


def _logreg_scorer(base):
    from .baselines import fit_logreg, linear_score

    base = dict(base or {})

    def prepare(point):
        return {**base, **point}

    def fit_predict(params, train, test):
        return linear_score(fit_logreg(train, **params), test.features)

    def complexity(params):
        return (-float(params.get("l2", 0.0)),)

    return prepare, fit_predict, complexity


def _student_scorer(base, teacher, data):
    from .distill import SoftLabelSet, soft_targets_for, fit_student
    from .ebm import IDENTITY, EbmConfig, predict_score

    if teacher is None:
        raise ConfigError("student grid search needs a teacher model")
    base = (base or EbmConfig()).replace(link=IDENTITY)
    soft_cache: dict[float, np.ndarray] = {}

    def prepare(point):
        point = dict(point)
        T = float(point.pop("temperature", 1.0))
        if T not in soft_cache:
            soft_cache[T] = soft_targets_for(teacher, data.features, T)
        return T, base.replace(**point)

    def fit_predict(prepared, train, test, rows=None):
        T, cfg = prepared
        soft = SoftLabelSet(train.features, soft_cache[T][rows], T, teacher.fingerprint, train.schema)
        return predict_score(fit_student(soft, cfg), test.features)

    def complexity(prepared):
        _, cfg = prepared
        return (cfg.n_interactions, cfg.n_rounds)

    return prepare, fit_predict, complexity


def grid_search(train, family: str, grid, k: int = DEFAULT_FOLDS, *, base=None,
                teacher=None) -> GridResult:
    """Exhaustive search scored by mean AUC over expanding-window CV splits.

    Splits whose test block holds a single class are skipped and counted.
    Ties (within 1e-12) go to the simplest configuration: fewest interactions
    then fewest rounds for EBMs, strongest regularisation for LogReg, and
    grid order after that.
    """
    points = expand_grid(grid)
    splits = cv_index_splits(train, k)
    if family == EBM:
        prepare, fit_predict, complexity = _ebm_scorer(base)
    elif family == LOGREG:
        prepare, fit_predict, complexity = _logreg_scorer(base)
    elif family == STUDENT:
        prepare, fit_predict, complexity = _student_scorer(base, teacher, train)
    else:
        raise ConfigError(f"unknown model family {family!r}")

    usable = []
    skipped = 0
    for tr, te in splits:
        y_te = train.labels[te]
        if np.ptp(y_te) == 0.0 or len(tr) == 0:
            skipped += 1
            continue
        usable.append((tr, te))
    if not usable:
        raise CvInfeasibleError(f"all {len(splits)} CV splits have a single-class test block")

    rows = []
    prepared_points = []
    for point in points:
        prepared = prepare(point)
        prepared_points.append(prepared)
        aucs = []
        for tr, te in usable:
            tr_set, te_set = train.take(tr), train.take(te)
            if family == STUDENT:
                scores = fit_predict(prepared, tr_set, te_set, rows=tr)
            else:
                scores = fit_predict(prepared, tr_set, te_set)
            aucs.append(roc_auc(te_set.labels, scores))
        rows.append(CvRow(dict(point), float(np.mean(aucs)), tuple(aucs), skipped))

    best_mean = max(r.mean_auc for r in rows)
    candidates = [i for i, r in enumerate(rows) if r.mean_auc >= best_mean - TIE_TOL]
    best_i = min(candidates, key=lambda i: (complexity(prepared_points[i]), i))
    return GridResult(family, dict(points[best_i]), rows[best_i].mean_auc, tuple(rows), skipped)


# -- aggregate reports -------------------------------------------------------

@dataclass(frozen=True)
class EvalReport:
    method: str
    per_individual: tuple[tuple[str, float | None], ...]
    n: int
    mean: float
    std: float
    median: float
    q1: float
    q3: float
    min: float
    max: float
    outliers: tuple[str, ...] = ()
    relative_change: float | None = None
    baseline: str | None = None
    relative_excluded: tuple[str, ...] = ()
    undefined: tuple[str, ...] = ()

    @property
    def aucs(self) -> dict[str, float]:
        return {i: a for i, a in self.per_individual if a is not None}

    def cell(self) -> str:
        return format_cell(self.mean, self.std)


def format_cell(mean: float, std: float) -> str:
    return f"{mean:.3f} ({std:.3f})"


def aggregate_reports(aucs, baseline=None, method: str = "method") -> EvalReport:
    """Summary statistics over per-individual AUCs.

    ``aucs`` maps individual id -> AUC (``None`` for undefined, which is
    listed but excluded). ``std`` uses the population denominator. With a
    ``baseline`` report or mapping, ``relative_change`` is the mean of
    ``(auc - base) / base`` over shared individuals with a non-zero baseline.
    """
    items = list(aucs.items()) if isinstance(aucs, Mapping) else [tuple(p) for p in aucs]
    defined = [(i, float(a)) for i, a in items if a is not None]
    if not defined:
        raise DataError("no defined AUC values to aggregate")
    vals = np.array([a for _, a in defined])
    q1, med, q3 = (float(v) for v in np.percentile(vals, [25, 50, 75]))
    iqr = q3 - q1
    outliers = tuple(i for i, a in defined if a < q1 - 1.5 * iqr or a > q3 + 1.5 * iqr)

    rel, base_name, excluded = None, None, ()
    if baseline is not None:
        if isinstance(baseline, EvalReport):
            base_map, base_name = baseline.aucs, baseline.method
        else:
            base_map, base_name = {i: a for i, a in dict(baseline).items() if a is not None}, "baseline"
        changes, excl = [], []
        for i, a in defined:
            b = base_map.get(i)
            if b is None or b == 0.0:
                excl.append(i)
                continue
            changes.append((a - b) / b)
        excluded = tuple(excl)
        rel = float(np.mean(changes)) if changes else None

    return EvalReport(
        method=method,
        per_individual=tuple((str(i), None if a is None else float(a)) for i, a in items),
        n=len(defined),
        mean=float(vals.mean()),
        std=float(vals.std()),
        median=med,
        q1=q1,
        q3=q3,
        min=float(vals.min()),
        max=float(vals.max()),
        outliers=outliers,
        relative_change=rel,
        baseline=base_name,
        relative_excluded=excluded,
        undefined=tuple(str(i) for i, a in items if a is None),
    )


def _num(v) -> str:
    return "NA" if v is None else repr(float(v))


def write_auc_table(reports: Iterable[EvalReport], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["individual_id", "method", "auc"])
        for rep in reports:
            for ind, auc in rep.per_individual:
                w.writerow([ind, rep.method, _num(auc)])


AGGREGATE_COLUMNS = ["method", "n", "mean", "std", "q1", "median", "q3", "min", "max",
                     "outlier_ids", "relative_change_vs_baseline", "baseline", "formatted"]


def write_aggregate_table(reports: Sequence[EvalReport], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(AGGREGATE_COLUMNS)
        for r in reports:
            w.writerow([r.method, r.n, _num(r.mean), _num(r.std), _num(r.q1), _num(r.median),
                        _num(r.q3), _num(r.min), _num(r.max), ";".join(r.outliers),
                        _num(r.relative_change), r.baseline or "", r.cell()])
