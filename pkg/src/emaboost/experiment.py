"""Config-driven runs of the idiographic and nomothetic regimes."""

from __future__ import annotations

import csv
import hashlib
import itertools
import json
import logging
import platform
import time
from dataclasses import asdict, dataclass, field, fields, replace
from datetime import timedelta
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import scipy

from . import __version__, kernels
from .baselines import fit_logreg, linear_score, save_linear
from .distill import DistillationResult, run_distillation, write_distillation_table
from .ebm import EbmConfig, fit_ebm, predict_score, save_model
from .ema import (
    Exclusion,
    Study,
    build_targets,
    filter_individuals,
    outcome_rule_from_dict,
    pool_training_sets,
    read_study,
    sequential_split,
)
from .errors import ConfigError, CvInfeasibleError, DataError, EmaBoostError
from .evaluate import (
    EBM,
    LOGREG,
    EvalReport,
    aggregate_reports,
    format_cell,
    grid_search,
    safe_auc,
    write_aggregate_table,
    write_auc_table,
)
from .synth import SynthConfig, derive_seed, generate_study

_log = logging.getLogger(__name__)

IDIO_EBM = "idiographic_ebm"
IDIO_LOGREG = "idiographic_logreg"
POOLED = "nomothetic_pooled"
DISTILL = "nomothetic_distill"
REGIMES = (IDIO_EBM, IDIO_LOGREG, POOLED, DISTILL)
METHOD_NAMES = {IDIO_EBM: "ebm", IDIO_LOGREG: "logreg", POOLED: "ebm_all", DISTILL: "kd"}

DEFAULT_USERS = (20, 50, 100)
DEFAULT_FEATURES = (25, 60)
DEFAULT_SAMPLES = (50, 100, 300)


@dataclass(frozen=True)
class PrepConfig:
    min_daily_obs: float = 3.0
    min_total_rows: int = 30
    min_minority: int = 5
    max_gap_hours: float = 2.0
    train_frac: float = 0.7


@dataclass(frozen=True)
class GridConfig:
    ebm_interactions: tuple[int, ...] = (0, 1, 3, 5, 10)
    logreg_l2: tuple[float, ...] = (0.001, 0.01, 0.1, 1.0)
    temperatures: tuple[float, ...] = (1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0)
    report_temperatures: tuple[float, ...] = (1.0, 5.0, 100.0)


@dataclass(frozen=True)
class ExperimentConfig:
    synthetic: SynthConfig | None = None
    csv: Mapping[str, Any] | None = None
    prep: PrepConfig = field(default_factory=PrepConfig)
    regimes: tuple[str, ...] = REGIMES
    ebm: EbmConfig = field(default_factory=EbmConfig)
    grids: GridConfig = field(default_factory=GridConfig)
    logreg_max_iter: int = 5000
    logreg_tol: float = 1e-6
    cv_folds: int = 4
    output_dir: str = "runs/experiment"
    seed: int = 0
    save_models: bool = True

    def validate(self) -> "ExperimentConfig":
        if (self.synthetic is None) == (self.csv is None):
            raise ConfigError("configure exactly one data source: 'synthetic' or 'csv'")
        if not self.regimes:
            raise ConfigError("at least one regime is required")
        bad = [r for r in self.regimes if r not in REGIMES]
        if bad:
            raise ConfigError(f"unknown regimes {bad}; choose from {list(REGIMES)}")
        if self.csv is not None and not {"path", "schema"} <= set(self.csv):
            raise ConfigError("csv source needs 'path' and 'schema'")
        if self.cv_folds < 1:
            raise ConfigError("cv_folds must be >= 1")
        self.ebm.validate()
        if self.synthetic is not None:
            self.synthetic.validate()
        return self

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["regimes"] = list(self.regimes)
        for k, v in d["grids"].items():
            d["grids"][k] = list(v)
        if self.csv is not None:
            d["csv"] = dict(self.csv)
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ExperimentConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown experiment fields {sorted(unknown)}")
        try:
            if d.get("synthetic") is not None:
                d["synthetic"] = SynthConfig.from_dict(d["synthetic"])
            if "prep" in d:
                d["prep"] = PrepConfig(**d["prep"])
            if "ebm" in d:
                d["ebm"] = EbmConfig(**d["ebm"])
            if "grids" in d:
                d["grids"] = GridConfig(**{k: tuple(v) for k, v in d["grids"].items()})
            if "regimes" in d:
                d["regimes"] = tuple(d["regimes"])
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


@dataclass
class ExperimentResult:
    reports: dict[str, list[EvalReport]]
    exclusions: list[Exclusion]
    failures: list[dict[str, str]]
    manifest: dict[str, Any]
    distillation: DistillationResult | None = None
    splits: dict[str, tuple] = field(default_factory=dict)

    @property
    def partial_failure(self) -> bool:
        return bool(self.failures)

    def report(self, method: str) -> EvalReport:
        for reps in self.reports.values():
            for r in reps:
                if r.method == method:
                    return r
        raise KeyError(method)


def load_study(config: ExperimentConfig) -> tuple[Study, Any]:
    if config.synthetic is not None:
        study = generate_study(config.synthetic)
        return study, outcome_rule_from_dict({"threshold": 1.0})
    src = config.csv
    study = read_study(src["path"], src["schema"])
    return study, outcome_rule_from_dict(src.get("outcome_rule"))


def prepare_splits(study: Study, rule, prep: PrepConfig):
    """Filter, build next-time-point targets and split each retained individual."""
    gap = timedelta(hours=prep.max_gap_hours)
    kept, exclusions = filter_individuals(
        study, rule, min_daily_obs=prep.min_daily_obs, min_total_rows=prep.min_total_rows,
        min_minority=prep.min_minority, max_gap=gap, train_frac=prep.train_frac)
    splits = {}
    for ind in kept.individuals:
        try:
            sup = build_targets(ind, study.schema, rule, gap)
            splits[ind.individual_id] = sequential_split(sup, prep.train_frac)
        except DataError as exc:
            exclusions.append(Exclusion(ind.individual_id, "split", str(exc)))
    return splits, exclusions


def _capped_grid(values, d: int) -> list[int]:
    limit = d * (d - 1) // 2
    return list(dict.fromkeys(min(int(v), limit) for v in values))


class _Runner:
    def __init__(self, config: ExperimentConfig, splits, out: Path | None):
        self.cfg = config
        self.splits = splits
        self.out = out
        self.failures: list[dict[str, str]] = []
        self.cv_excluded: list[Exclusion] = []
        self.timings: dict[str, float] = {}
        self.selected: dict[str, dict[str, Any]] = {}
        self.pooled_model = None
        self.pooled_k = 0
        d = len(next(iter(splits.values()))[0].schema) if splits else 0
        self.k_grid = _capped_grid(config.grids.ebm_interactions, d)

    def _model_dir(self, regime: str) -> Path | None:
        if self.out is None or not self.cfg.save_models:
            return None
        p = self.out / "models" / regime
        p.mkdir(parents=True, exist_ok=True)
        return p

    def _fail(self, regime, ind_id, exc):
        _log.warning("%s failed for %s: %s", regime, ind_id, exc)
        self.failures.append({"regime": regime, "individual_id": ind_id,
                              "error": f"{type(exc).__name__}: {exc}"})

    def idiographic(self, regime: str) -> list[EvalReport]:
        aucs = {}
        chosen = {}
        mdir = self._model_dir(regime)
        for ind_id, (train, test) in self.splits.items():
            try:
                if regime == IDIO_EBM:
                    res = grid_search(train, EBM, {"n_interactions": self.k_grid},
                                      self.cfg.cv_folds, base=self.cfg.ebm)
                    model = fit_ebm(train, self.cfg.ebm.replace(**res.best))
                    scores = predict_score(model, test.features)
                    if mdir is not None:
                        save_model(model, mdir / f"{ind_id}.json")
                else:
                    base = {"max_iter": self.cfg.logreg_max_iter, "tol": self.cfg.logreg_tol}
                    res = grid_search(train, LOGREG, {"l2": list(self.cfg.grids.logreg_l2)},
                                      self.cfg.cv_folds, base=base)
                    model = fit_logreg(train, **{**base, **res.best})
                    scores = linear_score(model, test.features)
                    if mdir is not None:
                        save_linear(model, mdir / f"{ind_id}.json")
            except CvInfeasibleError as exc:
                self.cv_excluded.append(Exclusion(ind_id, f"cv_infeasible:{regime}", str(exc)))
                continue
            except EmaBoostError as exc:
                self._fail(regime, ind_id, exc)
                continue
            chosen[ind_id] = res.best
            aucs[ind_id] = safe_auc(test.labels, scores)
        self.selected[regime] = chosen
        return [aggregate_reports(aucs, None, METHOD_NAMES[regime])] if aucs else []

    def _pooled_model(self):
        if self.pooled_model is None:
            pooled = pool_training_sets([(i, tr) for i, (tr, _) in self.splits.items()])
            res = grid_search(pooled, EBM, {"n_interactions": self.k_grid},
                              self.cfg.cv_folds, base=self.cfg.ebm)
            self.pooled_k = int(res.best["n_interactions"])
            self.pooled_model = fit_ebm(pooled, self.cfg.ebm.replace(**res.best))
            self.selected[POOLED] = {"*": res.best}
        return self.pooled_model

    def pooled(self) -> list[EvalReport]:
        model = self._pooled_model()
        mdir = self._model_dir(POOLED)
        if mdir is not None:
            save_model(model, mdir / "ebm_all.json")
        aucs = {i: safe_auc(te.labels, predict_score(model, te.features))
                for i, (_, te) in self.splits.items()}
        return [aggregate_reports(aucs, None, METHOD_NAMES[POOLED])]

    def distill(self) -> tuple[list[EvalReport], DistillationResult]:
        teacher = self._pooled_model()
        student_cfg = self.cfg.ebm.replace(n_interactions=self.pooled_k)
        result = run_distillation(
            {i: tr for i, (tr, _) in self.splits.items()},
            {i: te for i, (_, te) in self.splits.items()},
            student_config=student_cfg, temperatures=self.cfg.grids.temperatures,
            k=self.cfg.cv_folds, teacher=teacher,
            report_temperatures=self.cfg.grids.report_temperatures)
        for ind_id, why in result.skipped.items():
            self.cv_excluded.append(Exclusion(ind_id, f"cv_infeasible:{DISTILL}", why))
        mdir = self._model_dir(DISTILL)
        if mdir is not None:
            save_model(teacher, mdir / "teacher.json")
            for ind_id, student in result.students.items():
                save_model(student, mdir / f"{ind_id}.json")
        reports = []
        if result.chosen:
            reports.append(result.report("kd"))
            reports.extend(result.fixed_report(float(T)) for T in self.cfg.grids.report_temperatures)
        self.selected[DISTILL] = {i: {"temperature": T} for i, T in result.chosen.items()}
        return reports, result


def _with_baseline(rep: EvalReport, baseline: EvalReport | None) -> EvalReport:
    if baseline is None or rep.method == baseline.method:
        return rep
    return aggregate_reports(dict(rep.per_individual), baseline, rep.method)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _versions() -> dict[str, str]:
    return {"emaboost": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version(), "kernel_backend": kernels.BACKEND}


def run_experiment(config: ExperimentConfig, output_dir=None, write: bool = True) -> ExperimentResult:
    """Generate or load a study, prepare it, run every configured regime, write reports.

    Output layout under the output directory::

        reports/<regime>.csv   individual_id, method, auc
        summary.csv            one aggregate row per method
        distillation.csv       per-individual temperature choices (distill regime)
        exclusions.csv         individuals dropped during prep or CV
        models/<regime>/...    model documents
        manifest.json          config echo, versions, timings, report hashes
    """
    config = config.validate()
    out = Path(output_dir or config.output_dir) if write else None
    t0 = time.perf_counter()
    study, rule = load_study(config)
    splits, exclusions = prepare_splits(study, rule, config.prep)
    if not splits:
        raise DataError("no individual survived data preparation")
    t_prep = time.perf_counter()

    if out is not None:
        (out / "reports").mkdir(parents=True, exist_ok=True)
    runner = _Runner(config, splits, out)
    reports: dict[str, list[EvalReport]] = {}
    distillation = None
    for regime in REGIMES:
        if regime not in config.regimes:
            continue
        t = time.perf_counter()
        try:
            if regime in (IDIO_EBM, IDIO_LOGREG):
                reports[regime] = runner.idiographic(regime)
            elif regime == POOLED:
                reports[regime] = runner.pooled()
            else:
                reports[regime], distillation = runner.distill()
        except (CvInfeasibleError, EmaBoostError) as exc:
            runner._fail(regime, "*", exc)
            reports[regime] = []
        runner.timings[regime] = time.perf_counter() - t

    baseline = reports.get(IDIO_EBM, [None])[0] if reports.get(IDIO_EBM) else None
    for regime, reps in reports.items():
        reports[regime] = [_with_baseline(r, baseline) for r in reps]
    all_exclusions = exclusions + runner.cv_excluded

    manifest: dict[str, Any] = {
        "config": config.to_dict(),
        "seed": config.seed,
        "versions": _versions(),
        "study": {"source": study.metadata.get("source", ""), "n_individuals": len(study.individuals),
                  "n_retained": len(splits), "n_features": len(study.schema)},
        "exclusions": [asdict(e) for e in all_exclusions],
        "failures": runner.failures,
        "selected_hyperparameters": runner.selected,
        "timings_seconds": {"prep": t_prep - t0, **runner.timings},
    }
    if out is not None:
        files = []
        for regime, reps in reports.items():
            path = out / "reports" / f"{regime}.csv"
            write_auc_table(reps, path)
            files.append(path)
        flat = [r for reps in reports.values() for r in reps]
        write_aggregate_table(flat, out / "summary.csv")
        files.append(out / "summary.csv")
        if distillation is not None:
            write_distillation_table(distillation, out / "distillation.csv")
            files.append(out / "distillation.csv")
        _write_exclusions(all_exclusions, out / "exclusions.csv")
        files.append(out / "exclusions.csv")
        manifest["report_sha256"] = {str(p.relative_to(out)): _sha256(p) for p in files}
        manifest["timings_seconds"]["total"] = time.perf_counter() - t0
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return ExperimentResult(reports, all_exclusions, runner.failures, manifest, distillation, splits)


def _write_exclusions(exclusions, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["individual_id", "criterion", "detail"])
        for e in exclusions:
            w.writerow([e.individual_id, e.criterion, e.detail])


# -- synthetic sweep ---------------------------------------------------------

def default_cells(users=DEFAULT_USERS, features=DEFAULT_FEATURES, samples=DEFAULT_SAMPLES):
    """(users, features, samples) cells in table order, without the 60-feature/50-sample cells."""
    return [(u, f, s) for u, f, s in itertools.product(users, features, samples)
            if not (f == 60 and s == 50)]


@dataclass(frozen=True)
class GridRow:
    users: int
    features: int
    samples: int
    method: str
    n: int
    mean: float | None
    std: float | None
    status: str = "ok"

    @property
    def formatted(self) -> str:
        return "failed" if self.mean is None else format_cell(self.mean, self.std)


def run_synthetic_grid(base: ExperimentConfig, users=DEFAULT_USERS, features=DEFAULT_FEATURES,
                       samples=DEFAULT_SAMPLES, output_dir=None, write_cells: bool = False,
                       progress=None) -> list[GridRow]:
    """Run one experiment per table cell and collect mean (std) per method."""
    if base.synthetic is None:
        raise ConfigError("the synthetic grid needs a synthetic base configuration")
    out = Path(output_dir or base.output_dir)
    rows: list[GridRow] = []
    for u, f, s in default_cells(users, features, samples):
        synth = replace(base.synthetic, n_individuals=u, n_features=f, n_samples=s,
                        seed=derive_seed(base.seed, "cell", u, f, s))
        cfg = replace(base, synthetic=synth, csv=None)
        cell_dir = out / "cells" / f"u{u}_f{f}_s{s}"
        try:
            res = run_experiment(cfg, cell_dir, write=write_cells)
        except EmaBoostError as exc:
            _log.warning("grid cell %s failed: %s", (u, f, s), exc)
            rows.append(GridRow(u, f, s, "*", 0, None, None, f"failed: {exc}"))
            continue
        status = "partial" if res.partial_failure else "ok"
        for reps in res.reports.values():
            for r in reps:
                rows.append(GridRow(u, f, s, r.method, r.n, r.mean, r.std, status))
        if progress is not None:
            progress(u, f, s)
    out.mkdir(parents=True, exist_ok=True)
    write_grid_summary(rows, out / "grid_summary.csv")
    (out / "grid_table.txt").write_text(format_grid_table(rows))
    return rows


def write_grid_summary(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["users", "features", "samples", "method", "n", "mean", "std", "formatted", "status"])
        for r in rows:
            w.writerow([r.users, r.features, r.samples, r.method, r.n,
                        "NA" if r.mean is None else repr(r.mean),
                        "NA" if r.std is None else repr(r.std), r.formatted, r.status])


def format_grid_table(rows) -> str:
    """Wide text table: one line per cell, one column per method."""
    methods = list(dict.fromkeys(r.method for r in rows if r.method != "*"))
    cells = list(dict.fromkeys((r.users, r.features, r.samples) for r in rows))
    lookup = {(r.users, r.features, r.samples, r.method): r.formatted for r in rows}
    header = ["#Users", "#Feat", "#Samples", *methods]
    lines = ["\t".join(header)]
    for c in cells:
        lines.append("\t".join([*map(str, c), *(lookup.get((*c, m), "-") for m in methods)]))
    return "\n".join(lines) + "\n"
