"""Teacher-student distillation: pooled EBM teacher, per-individual regression students."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import expit

from .ebm import IDENTITY, LOGISTIC, EbmConfig, EbmModel, fit_ebm, predict_score
from .ema import FeatureSpec, pool_training_sets, schema_fingerprint
from .errors import ConfigError, CvInfeasibleError, DataError, SchemaMismatch
from .evaluate import DEFAULT_FOLDS, STUDENT, EvalReport, aggregate_reports, grid_search, safe_auc

_log = logging.getLogger(__name__)

DEFAULT_TEMPERATURES = (1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0)
REPORT_TEMPERATURES = (1.0, 5.0, 100.0)
# keeps soft targets strictly inside (0, 1) where expit saturates in float64
_SOFT_EPS = 1e-15


def temperature_soften(logit, T: float):
    """Positive-class probability of a two-class softmax at temperature ``T``.

    For classes with log-odds ``logit`` this equals ``sigmoid(logit / T)``.
    """
    if not T > 0:
        raise ConfigError(f"temperature must be positive, got {T}")
    p = np.clip(expit(np.asarray(logit, dtype=np.float64) / T), _SOFT_EPS, 1.0 - _SOFT_EPS)
    return float(p) if np.ndim(p) == 0 else p


@dataclass(frozen=True, eq=False)
class SoftLabelSet:
    features: np.ndarray
    soft_targets: np.ndarray
    temperature: float
    teacher_fingerprint: str
    schema: tuple[FeatureSpec, ...]

    def __post_init__(self):
        t = np.asarray(self.soft_targets, dtype=np.float64)
        if t.shape[0] != np.asarray(self.features).shape[0]:
            raise DataError("soft targets and feature rows differ in length")
        if t.size and (t.min() <= 0.0 or t.max() >= 1.0):
            raise DataError("soft targets must lie strictly inside (0, 1)")
        object.__setattr__(self, "soft_targets", t)
        object.__setattr__(self, "schema", tuple(self.schema))

    def __len__(self) -> int:
        return self.soft_targets.shape[0]

    @property
    def n_levels(self) -> np.ndarray:
        return np.array([f.levels for f in self.schema], dtype=np.int32)


def soft_targets_for(teacher: EbmModel, X, T: float) -> np.ndarray:
    if teacher.link != LOGISTIC:
        raise ConfigError("the teacher must be a logistic-link model")
    return np.atleast_1d(temperature_soften(predict_score(teacher, np.asarray(X)), T))


def build_soft_dataset(teacher: EbmModel, individual_train, T: float) -> SoftLabelSet:
    """Replace hard labels with the teacher's softened probabilities."""
    if schema_fingerprint(individual_train.schema) != teacher.fingerprint:
        raise SchemaMismatch("individual training set does not share the teacher's schema")
    soft = soft_targets_for(teacher, individual_train.features, T)
    return SoftLabelSet(individual_train.features, soft, float(T), teacher.fingerprint,
                        individual_train.schema)


def fit_student(soft: SoftLabelSet, config: EbmConfig | None = None) -> EbmModel:
    config = config or EbmConfig(link=IDENTITY)
    if config.link != IDENTITY:
        raise ConfigError("students are regression EBMs; use link='identity'")
    return fit_ebm(soft, config)


def student_probability(student: EbmModel, x):
    """Student score clamped to [0, 1] for reporting; ranking uses raw scores."""
    return np.clip(predict_score(student, x), 0.0, 1.0)


@dataclass(frozen=True)
class DistillRow:
    individual_id: str
    temperature: float
    cv_auc: float | None
    test_auc: float | None
    n_train: int
    n_test: int
    selected: bool


@dataclass
class DistillationResult:
    teacher: EbmModel
    students: dict[str, EbmModel]
    rows: list[DistillRow]
    chosen: dict[str, float]
    teacher_test_auc: dict[str, float | None]
    skipped: dict[str, str] = field(default_factory=dict)

    def report(self, method: str = "kd", baseline=None) -> EvalReport:
        aucs = {r.individual_id: r.test_auc for r in self.rows if r.selected}
        return aggregate_reports(aucs, baseline, method)

    def fixed_report(self, T: float, baseline=None) -> EvalReport:
        aucs = {}
        for r in self.rows:
            if r.temperature == T and r.individual_id not in aucs:
                aucs[r.individual_id] = r.test_auc
        return aggregate_reports(aucs, baseline, f"kd_T{T:g}")


def run_distillation(train_sets: Mapping[str, object], test_sets: Mapping[str, object],
                     teacher_config: EbmConfig | None = None,
                     student_config: EbmConfig | None = None,
                     temperatures: Sequence[float] = DEFAULT_TEMPERATURES,
                     k: int = DEFAULT_FOLDS, *, teacher: EbmModel | None = None,
                     report_temperatures: Sequence[float] = REPORT_TEMPERATURES) -> DistillationResult:
    """Pooled teacher, then one student per individual with T picked by CV.

    Temperature selection scores each candidate by expanding-window CV on the
    individual's training rows against the hard labels. The chosen student and
    one student per ``report_temperatures`` value are evaluated on the
    untouched test rows. Individuals whose CV is infeasible are listed in
    ``skipped``.
    """
    if not temperatures:
        raise ConfigError("empty temperature grid")
    if teacher is None:
        pooled = pool_training_sets(list(train_sets.items()))
        teacher = fit_ebm(pooled, teacher_config or EbmConfig())
    student_config = (student_config or EbmConfig()).replace(link=IDENTITY)
    grid = [{"temperature": float(T)} for T in temperatures]

    students, rows, chosen, teacher_auc, skipped = {}, [], {}, {}, {}
    for ind_id, train in train_sets.items():
        test = test_sets[ind_id]
        try:
            result = grid_search(train, STUDENT, grid, k, base=student_config, teacher=teacher)
        except CvInfeasibleError as exc:
            skipped[ind_id] = str(exc)
            _log.info("distillation skipped %s: %s", ind_id, exc)
            continue
        cv_by_T = {float(r.params["temperature"]): r.mean_auc for r in result.table}
        T_best = float(result.best["temperature"])
        chosen[ind_id] = T_best
        teacher_auc[ind_id] = safe_auc(test.labels, predict_score(teacher, test.features))
        for T in dict.fromkeys([T_best, *map(float, report_temperatures)]):
            student = fit_student(build_soft_dataset(teacher, train, T), student_config)
            auc = safe_auc(test.labels, predict_score(student, test.features))
            selected = T == T_best
            if selected:
                students[ind_id] = student
            rows.append(DistillRow(ind_id, T, cv_by_T.get(T), auc, len(train), len(test), selected))
    return DistillationResult(teacher, students, rows, chosen, teacher_auc, skipped)


def write_distillation_table(result: DistillationResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["individual_id", "T", "cv_auc", "test_auc", "n_train", "n_test", "selected"])
        for r in result.rows:
            w.writerow([r.individual_id, repr(r.temperature),
                        "NA" if r.cv_auc is None else repr(r.cv_auc),
                        "NA" if r.test_auc is None else repr(r.test_auc),
                        r.n_train, r.n_test, int(r.selected)])
