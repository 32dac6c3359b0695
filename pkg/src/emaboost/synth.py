"""Synthetic multi-individual EMA studies with a planted ground truth.

Each feature column is drawn from its own normal distribution and binned:
ordinal features into equal-width bins, binary features at the median. A
latent score made of signed main effects on standardised levels plus
weighted pairwise products is thresholded at a quantile so the class ratio
is exact before noise. Label noise re-draws a fixed number of labels and
feature noise permutes a fixed number of columns.

Row ``i`` of an individual's design ends up as supervised row ``i`` after
next-time-point target construction: the label of sample ``i`` is stored as
the outcome of observation ``i + 1`` and one trailing observation closes
the series. Observations sit on a regular two-hour grid, so no successor
falls outside the default target window.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import asdict, dataclass, field
from datetime import datetime, timedelta

import numpy as np

from .binning import Discretized, discretize_equiwidth
from .ema import FeatureSpec, IndividualSeries, Observation, Study
from .errors import ConfigError

__all__ = [
    "GroundTruthSpec",
    "SynthConfig",
    "apply_feature_noise",
    "apply_label_noise",
    "assign_labels",
    "derive_seed",
    "discretize_equiwidth",
    "generate_study",
    "Discretized",
]

START = datetime(2024, 1, 1, 8, 0)
SPACING = timedelta(hours=2)


def derive_seed(master: int, *keys) -> int:
    """Stable 63-bit seed from a master seed and arbitrary keys."""
    text = ":".join([str(int(master)), *map(str, keys)])
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "little") >> 1


@dataclass(frozen=True)
class GroundTruthSpec:
    n_main_effects: int = 5
    n_interactions: int = 3
    interaction_weight: float = 1.0
    jitter: float = 0.25


@dataclass(frozen=True)
class SynthConfig:
    n_individuals: int = 20
    n_features: int = 25
    n_samples: int = 50
    positive_frac: float = 0.7
    label_noise_frac: float = 0.2
    feature_noise_frac: float = 0.2
    categorical_frac: float = 0.2
    ordinal_levels: int = 6
    ground_truth: GroundTruthSpec = field(default_factory=GroundTruthSpec)
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.ground_truth, dict):
            object.__setattr__(self, "ground_truth", GroundTruthSpec(**self.ground_truth))

    @property
    def imbalance_ratio(self) -> float:
        return self.positive_frac / (1.0 - self.positive_frac)

    def validate(self) -> "SynthConfig":
        if min(self.n_individuals, self.n_features, self.n_samples) < 1:
            raise ConfigError("individuals, features and samples must be >= 1")
        if not 0.0 < self.positive_frac < 1.0:
            raise ConfigError("positive_frac must be in (0, 1)")
        for name in ("label_noise_frac", "feature_noise_frac", "categorical_frac"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {v}")
        if not 2 <= self.ordinal_levels <= 64:
            raise ConfigError("ordinal_levels must be in [2, 64]")
        gt = self.ground_truth
        if gt.n_main_effects < 0 or gt.n_interactions < 0:
            raise ConfigError("ground-truth term counts must be >= 0")
        if gt.interaction_weight < 0 or gt.jitter < 0:
            raise ConfigError("interaction_weight and jitter must be >= 0")
        if gt.n_main_effects + 2 * gt.n_interactions > self.n_features:
            raise ConfigError("n_main_effects + 2 * n_interactions exceeds n_features")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        d = dict(d)
        gt = d.pop("ground_truth", {}) or {}
        return cls(ground_truth=GroundTruthSpec(**gt), **d)


def _count(frac: float, n: int) -> int:
    return int(math.floor(frac * n + 1e-9))


def assign_labels(latent_scores, positive_frac: float, rng=None) -> np.ndarray:
    """Label the top ``ceil(n * positive_frac)`` scores positive.

    Tied scores are ordered by a random key when ``rng`` is given (row order
    otherwise), which keeps the class count exact.
    """
    s = np.asarray(latent_scores, dtype=np.float64)
    n = s.size
    n_pos = int(math.ceil(n * positive_frac - 1e-9))
    tiebreak = rng.random(n) if rng is not None else np.arange(n, dtype=np.float64)
    order = np.lexsort((tiebreak, s))
    labels = np.zeros(n, dtype=np.int64)
    labels[order[n - n_pos:]] = 1
    return labels


def apply_label_noise(labels, frac: float, rng, positive_frac: float = 0.7,
                      return_positions: bool = False):
    """Re-draw ``floor(frac * n)`` uniformly chosen labels from Bernoulli(positive_frac)."""
    if not 0.0 <= frac <= 1.0:
        raise ConfigError("label noise fraction must be in [0, 1]")
    out = np.array(labels, dtype=np.int64, copy=True)
    k = _count(frac, out.size)
    pos = np.sort(rng.choice(out.size, size=k, replace=False)) if k else np.empty(0, dtype=np.int64)
    out[pos] = (rng.random(k) < positive_frac).astype(np.int64)
    return (out, pos) if return_positions else out


def apply_feature_noise(features, frac: float, rng, return_columns: bool = False):
    """Permute the rows of ``floor(frac * d)`` uniformly chosen columns."""
    if not 0.0 <= frac <= 1.0:
        raise ConfigError("feature noise fraction must be in [0, 1]")
    out = np.array(features, copy=True)
    d = out.shape[1]
    k = _count(frac, d)
    cols = np.sort(rng.choice(d, size=k, replace=False)) if k else np.empty(0, dtype=np.int64)
    for c in cols:
        out[:, c] = rng.permutation(out[:, c])
    return (out, cols) if return_columns else out


@dataclass(frozen=True)
class _Structure:
    categorical: np.ndarray
    main_features: np.ndarray
    main_coef: np.ndarray
    pairs: np.ndarray
    pair_coef: np.ndarray


def _signed(rng, k):
    return rng.choice([-1.0, 1.0], size=k) * rng.uniform(0.5, 1.5, size=k)


def _structure(cfg: SynthConfig) -> _Structure:
    rng = np.random.default_rng(derive_seed(cfg.seed, "structure"))
    d = cfg.n_features
    gt = cfg.ground_truth
    n_cat = int(round(cfg.categorical_frac * d))
    cat = np.sort(rng.choice(d, size=n_cat, replace=False)) if n_cat else np.empty(0, dtype=np.int64)
    is_cat = np.zeros(d, dtype=bool)
    is_cat[cat] = True
    cats = rng.permutation(np.flatnonzero(is_cat))
    ords = rng.permutation(np.flatnonzero(~is_cat))
    # products of binary features are the least linear, so pairs draw from them first
    pool = list(cats) + list(ords)
    pair_feats = pool[:2 * gt.n_interactions]
    left = set(pool[2 * gt.n_interactions:])
    main_pool = [f for f in ords if f in left] + [f for f in cats if f in left]
    mains = np.array(main_pool[:gt.n_main_effects], dtype=np.int64)
    pairs = np.array(pair_feats, dtype=np.int64).reshape(-1, 2)
    return _Structure(cat, mains, _signed(rng, len(mains)), pairs, _signed(rng, len(pairs)))


def _standardise(col: np.ndarray) -> np.ndarray:
    sd = col.std()
    return (col - col.mean()) / sd if sd > 0 else np.zeros(col.shape)


def _individual(cfg: SynthConfig, st: _Structure, ind_id: str):
    rng = np.random.default_rng(derive_seed(cfg.seed, "individual", ind_id))
    n, d, L = cfg.n_samples, cfg.n_features, cfg.ordinal_levels
    gt = cfg.ground_truth
    is_cat = np.zeros(d, dtype=bool)
    is_cat[st.categorical] = True

    X = np.empty((n + 1, d), dtype=np.int64)
    for f in range(d):
        mean, std = rng.uniform(-3.0, 3.0), rng.uniform(0.5, 2.0)
        raw = rng.normal(mean, std, size=n + 1)
        if is_cat[f]:
            X[:, f] = (raw > np.median(raw)).astype(np.int64)
        else:
            X[:, f] = discretize_equiwidth(raw, L).levels

    main_coef = st.main_coef * (1.0 + gt.jitter * rng.standard_normal(st.main_coef.size))
    pair_coef = st.pair_coef * (1.0 + gt.jitter * rng.standard_normal(st.pair_coef.size))
    Z = np.column_stack([_standardise(X[:n, f].astype(np.float64)) for f in range(d)])
    score = np.zeros(n)
    for f, b in zip(st.main_features, main_coef):
        score += b * Z[:, f]
    for (a, b), g in zip(st.pairs, pair_coef):
        score += gt.interaction_weight * g * Z[:, a] * Z[:, b]

    labels = assign_labels(score, cfg.positive_frac, rng)
    labels = apply_label_noise(labels, cfg.label_noise_frac, rng, cfg.positive_frac)
    X[:n] = apply_feature_noise(X[:n], cfg.feature_noise_frac, rng)
    return X, labels, score


def generate_study(config: SynthConfig) -> Study:
    """Generate a study; identical configs (seed included) give identical studies."""
    cfg = config.validate()
    st = _structure(cfg)
    schema = tuple(
        FeatureSpec.categorical(f"x{f:02d}") if f in set(st.categorical.tolist())
        else FeatureSpec.ordinal(f"x{f:02d}", cfg.ordinal_levels)
        for f in range(cfg.n_features)
    )
    individuals = []
    for idx in range(cfg.n_individuals):
        ind_id = f"u{idx:03d}"
        X, labels, _ = _individual(cfg, st, ind_id)
        obs = []
        for i in range(cfg.n_samples + 1):
            raw = None if i == 0 else float(labels[i - 1])
            obs.append(Observation(START + i * SPACING, tuple(int(v) for v in X[i]), raw))
        individuals.append(IndividualSeries(ind_id, tuple(obs)))
    meta = {
        "source": "synthetic",
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "ground_truth": {
            "main_features": st.main_features.tolist(),
            "main_coef": st.main_coef.tolist(),
            "pairs": st.pairs.tolist(),
            "pair_coef": st.pair_coef.tolist(),
        },
    }
    return Study(schema, tuple(individuals), meta)
