"""Domain types for hierarchical EMA studies and the data-preparation pipeline.

A :class:`Study` holds one :class:`IndividualSeries` per participant. The
preparation steps turn each series into a :class:`SupervisedSet` whose row
``i`` carries the features observed at time ``i`` and the outcome recorded at
the next time point:

    build_targets -> filter_individuals -> sequential_split -> pool_training_sets
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .binning import apply_edges, equiwidth_edges
from .errors import (
    ConfigError,
    DataError,
    EmptyStudyError,
    InsufficientDataError,
    SchemaMismatch,
    SchemaViolation,
)

MAX_LEVELS = 64
DEFAULT_MAX_GAP = timedelta(hours=2)
ORDINAL = "ordinal"
CATEGORICAL = "categorical"


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    kind: str
    levels: int
    bin_edges: tuple[float, ...] | None = None
    categories: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.kind not in (ORDINAL, CATEGORICAL):
            raise ConfigError(f"feature {self.name!r}: unknown kind {self.kind!r}")
        if not 2 <= self.levels <= MAX_LEVELS:
            raise ConfigError(
                f"feature {self.name!r}: levels must be in [2, {MAX_LEVELS}], got {self.levels}"
            )
        if self.bin_edges is not None:
            edges = self.bin_edges
            if len(edges) != self.levels - 1:
                raise ConfigError(f"feature {self.name!r}: need {self.levels - 1} bin edges")
            if any(b <= a for a, b in zip(edges, edges[1:])):
                raise ConfigError(f"feature {self.name!r}: bin edges must be strictly ascending")
        if self.categories is not None and len(self.categories) != self.levels:
            raise ConfigError(f"feature {self.name!r}: {len(self.categories)} categories for {self.levels} levels")

    @classmethod
    def ordinal(cls, name: str, levels: int, bin_edges=None) -> "FeatureSpec":
        edges = None if bin_edges is None else tuple(float(e) for e in bin_edges)
        return cls(name, ORDINAL, int(levels), edges)

    @classmethod
    def categorical(cls, name: str, cardinality: int = 2, categories=None) -> "FeatureSpec":
        cats = None if categories is None else tuple(str(c) for c in categories)
        return cls(name, CATEGORICAL, int(cardinality), None, cats)

    @property
    def is_categorical(self) -> bool:
        return self.kind == CATEGORICAL

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"name": self.name, "kind": self.kind, "levels": self.levels}
        if self.bin_edges is not None:
            out["bin_edges"] = list(self.bin_edges)
        if self.categories is not None:
            out["categories"] = list(self.categories)
        return out


def schema_fingerprint(schema: Sequence[FeatureSpec]) -> str:
    """Short stable hash of names, kinds and level counts."""
    payload = json.dumps([[f.name, f.kind, f.levels] for f in schema], separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class Observation:
    timestamp: datetime
    features: tuple[int | None, ...]
    raw_outcome: float | str | None = None

    @property
    def complete(self) -> bool:
        return all(v is not None for v in self.features)


@dataclass(frozen=True)
class IndividualSeries:
    individual_id: str
    observations: tuple[Observation, ...]

    def __post_init__(self):
        ts = [o.timestamp for o in self.observations]
        if any(b < a for a, b in zip(ts, ts[1:])):
            raise DataError(f"individual {self.individual_id!r}: timestamps are not time-ordered")

    def __len__(self) -> int:
        return len(self.observations)

    def mean_daily_observations(self) -> float:
        if not self.observations:
            return 0.0
        days = {o.timestamp.date() for o in self.observations}
        return len(self.observations) / len(days)


@dataclass(frozen=True)
class Study:
    schema: tuple[FeatureSpec, ...]
    individuals: tuple[IndividualSeries, ...]
    metadata: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "schema", tuple(self.schema))
        object.__setattr__(self, "individuals", tuple(self.individuals))
        d = len(self.schema)
        for ind in self.individuals:
            for obs in ind.observations:
                if len(obs.features) != d:
                    raise SchemaViolation(
                        f"individual {ind.individual_id!r}: row of length {len(obs.features)}, schema has {d}"
                    )
                for spec, v in zip(self.schema, obs.features):
                    if v is not None and not 0 <= v < spec.levels:
                        raise SchemaViolation(
                            f"individual {ind.individual_id!r}: feature {spec.name!r} "
                            f"level {v} outside [0, {spec.levels})"
                        )

    @property
    def ids(self) -> list[str]:
        return [ind.individual_id for ind in self.individuals]

    def individual(self, individual_id: str) -> IndividualSeries:
        for ind in self.individuals:
            if ind.individual_id == individual_id:
                return ind
        raise KeyError(individual_id)


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SupervisedSet:
    """Row-major level matrix with binary labels, in temporal order."""

    features: np.ndarray
    labels: np.ndarray
    timestamps: np.ndarray
    schema: tuple[FeatureSpec, ...]
    individual_ids: np.ndarray | None = None

    def __post_init__(self):
        X = np.array(self.features, dtype=np.int32, order="C")
        if X.ndim != 2:
            X = X.reshape(-1, len(self.schema))
        y = np.array(self.labels, dtype=np.float64).ravel()
        ts = np.array(self.timestamps, dtype="datetime64[m]").ravel()
        if X.shape[0] != y.shape[0] or ts.shape[0] != y.shape[0]:
            raise DataError(f"row count mismatch: {X.shape[0]} rows, {y.shape[0]} labels, {ts.shape[0]} timestamps")
        if X.shape[1] != len(self.schema):
            raise SchemaViolation(f"{X.shape[1]} feature columns but schema has {len(self.schema)}")
        object.__setattr__(self, "features", _frozen(X))
        object.__setattr__(self, "labels", _frozen(y))
        object.__setattr__(self, "timestamps", _frozen(ts))
        object.__setattr__(self, "schema", tuple(self.schema))
        if self.individual_ids is not None:
            ids = np.array(self.individual_ids, dtype=object).ravel()
            object.__setattr__(self, "individual_ids", _frozen(ids))

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def n_levels(self) -> np.ndarray:
        return np.array([f.levels for f in self.schema], dtype=np.int32)

    @property
    def fingerprint(self) -> str:
        return schema_fingerprint(self.schema)

    def take(self, rows) -> "SupervisedSet":
        ids = None if self.individual_ids is None else self.individual_ids[rows]
        return SupervisedSet(self.features[rows], self.labels[rows], self.timestamps[rows], self.schema, ids)

    def class_counts(self) -> tuple[int, int]:
        pos = int(np.count_nonzero(self.labels > 0.5))
        return len(self) - pos, pos


# -- outcome rules -----------------------------------------------------------

@dataclass(frozen=True)
class ThresholdRule:
    """Positive when the numeric raw outcome is >= ``threshold``."""

    threshold: float = 1.0

    def __call__(self, raw) -> int | None:
        if raw is None or raw == "":
            return None
        return int(float(raw) >= self.threshold)

    def to_dict(self):
        return {"threshold": self.threshold}


@dataclass(frozen=True)
class CategoryRule:
    """Positive when the raw outcome belongs to ``positive``."""

    positive: frozenset[str]

    def __call__(self, raw) -> int | None:
        if raw is None or raw == "":
            return None
        return int(str(raw) in self.positive)

    def to_dict(self):
        return {"categories": sorted(self.positive)}


def outcome_rule_from_dict(spec: Mapping[str, Any] | None):
    if not spec:
        return ThresholdRule()
    if "threshold" in spec:
        return ThresholdRule(float(spec["threshold"]))
    if "categories" in spec:
        return CategoryRule(frozenset(str(c) for c in spec["categories"]))
    if "category_map" in spec:
        cmap = spec["category_map"]
        if len(cmap) != 1:
            raise ConfigError("category_map must name exactly one column")
        (positive,) = cmap.values()
        return CategoryRule(frozenset(str(c) for c in positive))
    raise ConfigError(f"unrecognised outcome rule {dict(spec)!r}")


# -- preparation -------------------------------------------------------------

def build_targets(series: IndividualSeries, schema: Sequence[FeatureSpec], outcome_rule=None,
                  max_gap: timedelta = DEFAULT_MAX_GAP) -> SupervisedSet:
    """Pair each observation's features with the outcome of its successor.

    A row is kept only when its own features are complete, the next
    observation exists, lies at most ``max_gap`` later (inclusive) and has a
    defined outcome. Raises :class:`InsufficientDataError` when nothing is left.
    """
    if max_gap <= timedelta(0):
        raise ConfigError("max_gap must be positive")
    rule = outcome_rule if outcome_rule is not None else ThresholdRule()
    obs = series.observations
    rows, labels, stamps = [], [], []
    for cur, nxt in zip(obs, obs[1:]):
        if not cur.complete or nxt.timestamp - cur.timestamp > max_gap:
            continue
        label = rule(nxt.raw_outcome)
        if label is None:
            continue
        rows.append(cur.features)
        labels.append(label)
        stamps.append(np.datetime64(cur.timestamp, "m"))
    if not rows:
        raise InsufficientDataError(
            f"individual {series.individual_id!r}: insufficient consecutive data"
        )
    return SupervisedSet(np.array(rows, dtype=np.int32), np.array(labels, dtype=np.float64),
                         np.array(stamps, dtype="datetime64[m]"), schema)


def train_size(n: int, train_frac: float) -> int:
    return int(math.floor(n * train_frac + 1e-9))


def sequential_split(data: SupervisedSet, train_frac: float = 0.7) -> tuple[SupervisedSet, SupervisedSet]:
    """First ``floor(n * train_frac)`` rows train, the remainder test; no shuffling."""
    if not 0.0 < train_frac < 1.0:
        raise ConfigError(f"train_frac must be in (0, 1), got {train_frac}")
    n = len(data)
    n_train = train_size(n, train_frac)
    if n < 2 or n_train == 0 or n_train == n:
        raise InsufficientDataError(f"cannot split {n} rows with train_frac={train_frac}")
    return data.take(slice(0, n_train)), data.take(slice(n_train, n))


@dataclass(frozen=True)
class Exclusion:
    individual_id: str
    criterion: str
    detail: str


def filter_individuals(study: Study, outcome_rule=None, *, min_daily_obs: float = 3.0,
                       min_total_rows: int = 30, min_minority: int = 5,
                       max_gap: timedelta = DEFAULT_MAX_GAP,
                       train_frac: float = 0.7) -> tuple[Study, list[Exclusion]]:
    """Drop individuals with too few observations or too few minority-class events.

    ``min_total_rows`` counts supervised rows after target construction and
    ``min_minority`` counts the rarer class within the training portion.
    """
    if min(min_daily_obs, min_total_rows, min_minority) < 0:
        raise ConfigError("filter thresholds must be >= 0")
    kept, report = [], []
    for ind in study.individuals:
        daily = ind.mean_daily_observations()
        if daily < min_daily_obs:
            report.append(Exclusion(ind.individual_id, "daily_obs",
                                    f"{daily:.2f} observations/day < {min_daily_obs}"))
            continue
        try:
            sup = build_targets(ind, study.schema, outcome_rule, max_gap)
            n_rows = len(sup)
        except InsufficientDataError:
            sup, n_rows = None, 0
        if n_rows < min_total_rows:
            report.append(Exclusion(ind.individual_id, "total_rows",
                                    f"{n_rows} supervised rows < {min_total_rows}"))
            continue
        if min_minority > 0:
            minority = 0
            if sup is not None:
                y_train = sup.labels[:train_size(n_rows, train_frac)]
                pos = int(np.count_nonzero(y_train > 0.5))
                minority = min(pos, y_train.size - pos)
            if minority < min_minority:
                report.append(Exclusion(ind.individual_id, "minority",
                                        f"{minority} minority-class training rows < {min_minority}"))
                continue
        kept.append(ind)
    if not kept and study.individuals:
        err = EmptyStudyError(f"all {len(study.individuals)} individuals were excluded")
        err.report = report
        raise err
    return Study(study.schema, tuple(kept), dict(study.metadata)), report


def pool_training_sets(sets: Iterable[tuple[str, SupervisedSet]]) -> SupervisedSet:
    """Concatenate per-individual sets, keeping each row's individual id."""
    sets = list(sets)
    if not sets:
        raise DataError("nothing to pool")
    first_id, first = sets[0]
    for ind_id, s in sets[1:]:
        if s.schema != first.schema:
            raise SchemaMismatch(f"schema of individual {ind_id!r} differs from {first_id!r}")
    ids = np.concatenate([np.full(len(s), ind_id, dtype=object) for ind_id, s in sets])
    return SupervisedSet(
        np.concatenate([s.features for _, s in sets], axis=0),
        np.concatenate([s.labels for _, s in sets]),
        np.concatenate([s.timestamps for _, s in sets]),
        first.schema,
        ids,
    )


# -- CSV ingestion -----------------------------------------------------------

TIMESTAMP_FORMAT = "minutes"


def _parse_ts(text: str) -> datetime:
    return datetime.fromisoformat(text.strip()).replace(second=0, microsecond=0)


def _parse_raw(text: str):
    if text is None or text == "":
        return None
    try:
        return float(text)
    except ValueError:
        return text


def _resolve_schema(entries, columns: dict[str, list[str]]) -> tuple[list[FeatureSpec], list]:
    """Build FeatureSpecs plus one converter per feature column."""
    specs, converters = [], []
    for e in entries:
        name, kind = e["name"], e.get("kind", ORDINAL)
        if kind == CATEGORICAL:
            cats = e.get("categories")
            if cats is not None:
                lookup = {str(c): i for i, c in enumerate(cats)}
                specs.append(FeatureSpec.categorical(name, len(cats), cats))
                converters.append(lambda s, lookup=lookup: lookup[s])
            else:
                specs.append(FeatureSpec.categorical(name, int(e.get("cardinality", e.get("levels", 2)))))
                converters.append(lambda s: int(float(s)))
            continue
        if "bin_edges" in e:
            edges = [float(v) for v in e["bin_edges"]]
        elif "bins" in e:
            vals = [float(v) for v in columns[name] if v != ""]
            if not vals:
                raise DataError(f"feature {name!r}: no values to derive bins from")
            lo, hi = min(vals), max(vals)
            if hi <= lo:
                raise DataError(f"feature {name!r}: constant column cannot be binned")
            edges = list(equiwidth_edges(lo, hi, int(e["bins"])))
        else:
            specs.append(FeatureSpec.ordinal(name, int(e["levels"]), e.get("source_bin_edges")))
            converters.append(lambda s: int(float(s)))
            continue
        spec = FeatureSpec.ordinal(name, len(edges) + 1, edges)
        specs.append(spec)
        converters.append(lambda s, edges=np.asarray(edges): int(apply_edges([float(s)], edges)[0]))
    return specs, converters


def read_schema(path) -> dict[str, Any]:
    return json.loads(Path(path).read_text())


def read_study(csv_path, schema_path) -> Study:
    """Load a study from a long-format CSV plus a JSON schema sidecar.

    Rows with a missing feature value are kept as incomplete observations;
    target construction deletes them listwise.
    """
    sidecar = read_schema(schema_path)
    outcome_col = sidecar.get("outcome_column")
    with open(csv_path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    names = [e["name"] for e in sidecar["features"]]
    if rows:
        missing = [c for c in ["individual_id", "timestamp", *names] if c not in rows[0]]
        if missing:
            raise DataError(f"{csv_path}: missing columns {missing}")
    columns = {n: [r[n] for r in rows] for n in names}
    schema, converters = _resolve_schema(sidecar["features"], columns)

    grouped: dict[str, list[Observation]] = {}
    for r in rows:
        feats = []
        for name, conv in zip(names, converters):
            cell = r[name].strip()
            feats.append(None if cell == "" else conv(cell))
        raw = _parse_raw(r.get(outcome_col, "")) if outcome_col else None
        grouped.setdefault(r["individual_id"], []).append(
            Observation(_parse_ts(r["timestamp"]), tuple(feats), raw))
    individuals = []
    for ind_id, obs in grouped.items():
        obs.sort(key=lambda o: o.timestamp)
        individuals.append(IndividualSeries(ind_id, tuple(obs)))
    meta = dict(sidecar.get("metadata", {}))
    meta.setdefault("source", str(csv_path))
    return Study(tuple(schema), tuple(individuals), meta)


def _fmt_raw(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float) and v.is_integer():
        return str(int(v))
    return str(v)


def write_study(study: Study, csv_path, schema_path, outcome_column: str = "outcome") -> None:
    """Write ``study`` in the format :func:`read_study` reads."""
    names = [f.name for f in study.schema]
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["individual_id", "timestamp", *names, outcome_column])
        for ind in study.individuals:
            for o in ind.observations:
                cells = ["" if v is None else (f.categories[v] if f.categories else v)
                         for f, v in zip(study.schema, o.features)]
                w.writerow([ind.individual_id, o.timestamp.isoformat(timespec=TIMESTAMP_FORMAT),
                            *cells, _fmt_raw(o.raw_outcome)])
    entries = []
    for f in study.schema:
        e = f.to_dict()
        # written cells are level indices already; keep the edges for provenance only
        if "bin_edges" in e:
            e["source_bin_edges"] = e.pop("bin_edges")
        entries.append(e)
    sidecar = {"features": entries, "outcome_column": outcome_column,
               "metadata": dict(study.metadata)}
    Path(schema_path).write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
