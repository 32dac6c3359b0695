"""Explainable boosting machine: additive lookup tables fit by cyclic boosting."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np
from scipy.special import expit

from .. import kernels
from ..ema import FeatureSpec, schema_fingerprint
from ..errors import ConfigError, DataError, ModelFormatError, SchemaViolation, UnsupportedVersionError
from .interactions import InteractionRanking, rank_pairs

_log = logging.getLogger(__name__)

LOGISTIC = "logistic"
IDENTITY = "identity"
MODEL_FORMAT = "emaboost.ebm"
MODEL_VERSION = 1
_PROB_EPS = 1e-6


@dataclass(frozen=True)
class EbmConfig:
    n_rounds: int = 500
    learning_rate: float = 0.05
    max_leaves: int = 3
    n_interactions: int = 0
    interaction_rounds: int = 100
    link: str = LOGISTIC
    min_samples_leaf: int = 2
    validation_frac: float = 0.15
    seed: int = 0

    def validate(self, n_features: int | None = None) -> "EbmConfig":
        if not 0.0 < self.learning_rate <= 1.0:
            raise ConfigError(f"learning_rate must be in (0, 1], got {self.learning_rate}")
        if not 2 <= self.max_leaves <= 8:
            raise ConfigError(f"max_leaves must be in [2, 8], got {self.max_leaves}")
        if self.n_rounds < 0 or self.interaction_rounds < 0 or self.n_interactions < 0:
            raise ConfigError("round and interaction counts must be >= 0")
        if self.min_samples_leaf < 1:
            raise ConfigError("min_samples_leaf must be >= 1")
        if self.link not in (LOGISTIC, IDENTITY):
            raise ConfigError(f"unknown link {self.link!r}")
        if not 0.0 <= self.validation_frac < 1.0:
            raise ConfigError("validation_frac must be in [0, 1)")
        if n_features is not None and self.n_interactions > n_features * (n_features - 1) // 2:
            raise ConfigError(f"n_interactions={self.n_interactions} exceeds the number of pairs")
        return self

    def replace(self, **changes) -> "EbmConfig":
        known = {f.name for f in fields(self)}
        unknown = set(changes) - known
        if unknown:
            raise ConfigError(f"unknown EBM parameters {sorted(unknown)}")
        return EbmConfig(**{**asdict(self), **changes})


@dataclass(eq=False)
class EbmModel:
    intercept: float
    main_terms: list[np.ndarray]
    pairs: list[tuple[int, int]]
    pair_terms: list[np.ndarray]
    link: str
    schema: tuple[FeatureSpec, ...]
    main_counts: list[np.ndarray] = field(default_factory=list)
    pair_counts: list[np.ndarray] = field(default_factory=list)
    config: dict[str, Any] = field(default_factory=dict)
    degenerate: bool = False
    history: dict[str, Any] = field(default_factory=dict)

    @property
    def fingerprint(self) -> str:
        return schema_fingerprint(self.schema)

    @property
    def n_features(self) -> int:
        return len(self.schema)

    @classmethod
    def intercept_only(cls, intercept: float, schema, link: str = LOGISTIC) -> "EbmModel":
        return cls(float(intercept), [np.zeros(f.levels) for f in schema], [], [], link, tuple(schema))


# -- fitting -----------------------------------------------------------------

def _design(train):
    X = np.ascontiguousarray(train.features, dtype=np.int32)
    targets = getattr(train, "soft_targets", None)
    y = np.asarray(train.labels if targets is None else targets, dtype=np.float64)
    return X, np.ascontiguousarray(y), tuple(train.schema)


def _logit(p: float) -> float:
    p = min(max(p, _PROB_EPS), 1.0 - _PROB_EPS)
    return math.log(p / (1.0 - p))


def _center(table: np.ndarray, counts: np.ndarray) -> float:
    total = counts.sum()
    if total == 0:
        return 0.0
    mean = float(np.sum(counts * table) / total)
    table -= mean
    return mean


def _scores(intercept, terms, pairs, pair_terms, X):
    s = np.full(X.shape[0], intercept, dtype=np.float64)
    for f in range(X.shape[1]):
        s += terms[f][X[:, f]]
    for (i, j), t in zip(pairs, pair_terms):
        s += t[X[:, i], X[:, j]]
    return s


def fit_ebm(train, config: EbmConfig | None = None) -> EbmModel:
    """Fit an EBM to a :class:`SupervisedSet` or a soft-label set.

    Main effects are boosted first, one single-feature tree per feature per
    round, with scores updated before moving to the next feature. Pair terms
    are then boosted on top of the frozen main effects for the top-ranked
    pairs. All terms are centred under the training level distribution at the
    end, with the offsets folded into the intercept.
    """
    config = (config or EbmConfig()).validate()
    X, y, schema = _design(train)
    n, d = X.shape
    if n == 0:
        raise DataError("cannot fit an EBM on an empty training set")
    config.validate(d)
    logistic = config.link == LOGISTIC
    n_levels = np.array([f.levels for f in schema], dtype=np.int32)
    is_cat = np.array([f.is_categorical for f in schema], dtype=np.uint8)
    Lmax = int(n_levels.max()) if d else 1

    if np.ptp(y) == 0.0:
        base = _logit(float(y[0])) if logistic else float(y[0])
        model = EbmModel.intercept_only(base, schema, config.link)
        model.degenerate = True
        model.config = asdict(config)
        model.main_counts = [np.bincount(X[:, f], minlength=n_levels[f]).astype(np.int64) for f in range(d)]
        return model

    n_val = int(math.floor(n * config.validation_frac))
    if n_val < 2 or n - n_val < 2:
        n_val = 0
    n_fit = n - n_val
    Xf, yf = X[:n_fit], y[:n_fit]
    Xv, yv = np.ascontiguousarray(X[n_fit:]), np.ascontiguousarray(y[n_fit:])
    # base rate over every training row; the validation slice only picks the stopping round
    base_rate = float(y.mean())
    intercept = _logit(base_rate) if logistic else base_rate

    terms = np.zeros((d, Lmax), dtype=np.float64)
    s = np.full(n_fit, intercept)
    sv = np.full(n_val, intercept)
    main_hist = kernels.boost_main(Xf, yf, s, Xv, yv, sv, n_levels, is_cat, terms,
                                   config.n_rounds, config.learning_rate, config.max_leaves,
                                   config.min_samples_leaf, logistic)
    main_tables = [terms[f, :n_levels[f]].copy() for f in range(d)]
    s = _scores(intercept, main_tables, [], [], Xf)

    pairs: list[tuple[int, int]] = []
    pair_tables: list[np.ndarray] = []
    history = {"main_train_loss": np.asarray(main_hist[0]).tolist(),
               "main_val_loss": np.asarray(main_hist[1]).tolist(),
               "main_best_round": int(main_hist[2])}
    if config.n_interactions > 0 and d >= 2:
        r = yf - (1.0 / (1.0 + np.exp(-s)) if logistic else s)
        ranking = rank_pairs(Xf, n_levels, r, config.n_interactions)
        pairs = [p for p, strength in ranking if strength > 0.0]
        history["ranking"] = [[i, j, st] for (i, j), st in ranking]
        if pairs:
            pt = np.zeros((len(pairs), Lmax, Lmax), dtype=np.float64)
            sv = _scores(intercept, main_tables, [], [], Xv)
            pair_hist = kernels.boost_pairs(Xf, yf, s, Xv, yv, sv, np.array(pairs, dtype=np.int32),
                                            n_levels, pt, config.interaction_rounds,
                                            config.learning_rate, config.min_samples_leaf, logistic)
            pair_tables = [pt[k, :n_levels[i], :n_levels[j]].copy() for k, (i, j) in enumerate(pairs)]
            history.update(pair_train_loss=np.asarray(pair_hist[0]).tolist(),
                           pair_val_loss=np.asarray(pair_hist[1]).tolist(),
                           pair_best_round=int(pair_hist[2]))

    main_counts = [np.bincount(X[:, f], minlength=n_levels[f]).astype(np.int64) for f in range(d)]
    pair_counts = []
    for (i, j) in pairs:
        flat = X[:, i].astype(np.int64) * n_levels[j] + X[:, j]
        pair_counts.append(np.bincount(flat, minlength=n_levels[i] * n_levels[j])
                           .reshape(n_levels[i], n_levels[j]).astype(np.int64))
    for table, counts in zip(main_tables, main_counts):
        intercept += _center(table, counts)
    for table, counts in zip(pair_tables, pair_counts):
        intercept += _center(table, counts)

    return EbmModel(float(intercept), main_tables, pairs, pair_tables, config.link, schema,
                    main_counts, pair_counts, asdict(config), False, history)


# -- prediction --------------------------------------------------------------

def _as_rows(model: EbmModel, x) -> np.ndarray:
    X = np.asarray(x)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != model.n_features:
        raise SchemaViolation(f"rows have {X.shape[1]} features, model expects {model.n_features}")
    X = X.astype(np.int64)
    for f, spec in enumerate(model.schema):
        col = X[:, f]
        if col.size and (col.min() < 0 or col.max() >= spec.levels):
            bad = int(col[(col < 0) | (col >= spec.levels)][0])
            raise SchemaViolation(f"feature {spec.name!r}: level {bad} outside [0, {spec.levels})")
    return X


def predict_score(model: EbmModel, x):
    """Additive score. A single row returns a float, a matrix an array."""
    X = _as_rows(model, x)
    s = _scores(model.intercept, model.main_terms, model.pairs, model.pair_terms, X)
    return float(s[0]) if np.ndim(x) == 1 else s


def predict_proba(model: EbmModel, x):
    if model.link != LOGISTIC:
        raise ConfigError("predict_proba needs a logistic-link model; use predict_score")
    p = expit(predict_score(model, x))
    return float(p) if np.ndim(p) == 0 else p


# -- serialization -----------------------------------------------------------

def model_to_dict(model: EbmModel) -> dict[str, Any]:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "link": model.link,
        "intercept": model.intercept,
        "schema": [f.to_dict() for f in model.schema],
        "schema_fingerprint": model.fingerprint,
        "config": model.config,
        "degenerate": model.degenerate,
        "main_terms": [t.tolist() for t in model.main_terms],
        "main_counts": [c.tolist() for c in model.main_counts],
        "pairs": [list(p) for p in model.pairs],
        "pair_terms": [t.tolist() for t in model.pair_terms],
        "pair_counts": [c.tolist() for c in model.pair_counts],
        "history": model.history,
    }


def _spec_from_dict(e) -> FeatureSpec:
    return FeatureSpec(e["name"], e["kind"], int(e["levels"]),
                       tuple(e["bin_edges"]) if "bin_edges" in e else None,
                       tuple(e["categories"]) if "categories" in e else None)


def model_from_dict(doc: dict[str, Any]) -> EbmModel:
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ModelFormatError("not an EBM model document")
    if doc.get("version") != MODEL_VERSION:
        raise UnsupportedVersionError(f"unsupported model version {doc.get('version')!r}")
    try:
        schema = tuple(_spec_from_dict(e) for e in doc["schema"])
        model = EbmModel(
            intercept=float(doc["intercept"]),
            main_terms=[np.array(t, dtype=np.float64) for t in doc["main_terms"]],
            pairs=[(int(p[0]), int(p[1])) for p in doc["pairs"]],
            pair_terms=[np.array(t, dtype=np.float64) for t in doc["pair_terms"]],
            link=doc["link"],
            schema=schema,
            main_counts=[np.array(c, dtype=np.int64) for c in doc["main_counts"]],
            pair_counts=[np.array(c, dtype=np.int64) for c in doc["pair_counts"]],
            config=dict(doc["config"]),
            degenerate=bool(doc["degenerate"]),
            history=dict(doc.get("history", {})),
        )
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise ModelFormatError(f"malformed model document: {exc}") from exc
    if model.fingerprint != doc.get("schema_fingerprint"):
        raise ModelFormatError("schema fingerprint does not match the schema")
    if len(model.main_terms) != len(schema) or any(
            t.shape != (f.levels,) for t, f in zip(model.main_terms, schema)):
        raise ModelFormatError("main term tables do not match the schema")
    return model


def serialize_model(model: EbmModel) -> str:
    return json.dumps(model_to_dict(model), sort_keys=True)


def deserialize_model(text: str) -> EbmModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"cannot parse model document: {exc}") from exc
    return model_from_dict(doc)


def save_model(model: EbmModel, path) -> None:
    Path(path).write_text(serialize_model(model) + "\n")


def load_model(path) -> EbmModel:
    return deserialize_model(Path(path).read_text())
