import math

import numpy as np
import pytest

from emaboost.ema import ThresholdRule, build_targets, write_study
from emaboost.errors import ConfigError
from emaboost.synth import (
    GroundTruthSpec,
    SynthConfig,
    apply_feature_noise,
    apply_label_noise,
    assign_labels,
    derive_seed,
    generate_study,
)

CLEAN = dict(label_noise_frac=0.0, feature_noise_frac=0.0)


def supervised(study):
    return [build_targets(ind, study.schema, ThresholdRule()) for ind in study.individuals]


def test_study_shape_matches_table_setup():
    study = generate_study(SynthConfig(n_individuals=20, n_features=25, n_samples=50))
    assert len(study.individuals) == 20 and len(study.schema) == 25
    sets = supervised(study)
    assert all(len(s) == 50 for s in sets)
    for f, spec in enumerate(study.schema):
        col = np.concatenate([s.features[:, f] for s in sets])
        assert col.min() >= 0 and col.max() < spec.levels
        assert spec.levels == (2 if spec.is_categorical else 6)
    assert sum(spec.is_categorical for spec in study.schema) == 5


def test_same_seed_same_bytes(tmp_path):
    cfg = SynthConfig(n_individuals=3, n_samples=30, seed=8)
    for tag in ("a", "b"):
        write_study(generate_study(cfg), tmp_path / f"{tag}.csv", tmp_path / f"{tag}.json")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    other = generate_study(SynthConfig(n_individuals=3, n_samples=30, seed=9))
    assert other.individuals != generate_study(cfg).individuals


def test_all_ordinal():
    study = generate_study(SynthConfig(n_individuals=2, categorical_frac=0.0))
    assert all(not f.is_categorical and f.levels == 6 for f in study.schema)


def test_clean_positive_fraction_exact():
    study = generate_study(SynthConfig(n_individuals=5, n_samples=50, **CLEAN))
    assert all(int(s.labels.sum()) == 35 for s in supervised(study))


def test_assign_labels_counts_and_ties():
    rng = np.random.default_rng(0)
    assert assign_labels(rng.normal(size=50), 0.7).sum() == 35
    tied = assign_labels(np.zeros(10), 0.7, np.random.default_rng(1))
    assert tied.sum() == 7


def test_single_main_effect_is_monotone():
    gt = GroundTruthSpec(n_main_effects=1, n_interactions=0, interaction_weight=0.0, jitter=0.0)
    cfg = SynthConfig(n_individuals=4, n_samples=200, categorical_frac=0.0, ground_truth=gt, **CLEAN)
    study = generate_study(cfg)
    f = study.metadata["ground_truth"]["main_features"][0]
    sign = np.sign(study.metadata["ground_truth"]["main_coef"][0])
    for s in supervised(study):
        level = sign * s.features[:, f]
        for a in np.unique(level):
            for b in np.unique(level):
                if a < b:
                    assert s.labels[level == a].max() <= s.labels[level == b].min()


def test_pure_xor_labels_follow_parity():
    gt = GroundTruthSpec(n_main_effects=0, n_interactions=1, jitter=0.0)
    cfg = SynthConfig(n_individuals=4, n_features=5, n_samples=200, positive_frac=0.5, categorical_frac=0.4,
                      ground_truth=gt, **CLEAN)
    study = generate_study(cfg)
    (a, b), = study.metadata["ground_truth"]["pairs"]
    assert study.schema[a].is_categorical and study.schema[b].is_categorical
    for s in supervised(study):
        parity = s.features[:, a] ^ s.features[:, b]
        agree = max(np.mean(parity == s.labels), np.mean(parity != s.labels))
        # mismatches only where the quantile threshold splits a tied cell
        top = max(parity.sum(), len(parity) - parity.sum())
        assert agree >= 1 - abs(top - len(parity) / 2) / len(parity) - 1e-12


def test_label_noise_counts():
    rng = np.random.default_rng(0)
    y = np.r_[np.ones(70), np.zeros(30)].astype(int)
    assert np.array_equal(apply_label_noise(y, 0.0, rng), y)
    _, pos = apply_label_noise(y, 0.2, rng, return_positions=True)
    assert len(pos) == 20 and len(set(pos.tolist())) == 20
    sigma = math.sqrt(1000 * 0.21)
    for seed in range(20):
        out = apply_label_noise(np.zeros(1000, dtype=int), 1.0, np.random.default_rng(seed), 0.7)
        assert abs(out.sum() - 700) <= 3 * sigma


def test_feature_noise_counts():
    rng = np.random.default_rng(1)
    X = rng.integers(0, 6, size=(100, 25))
    assert np.array_equal(apply_feature_noise(X, 0.0, rng), X)
    out, cols = apply_feature_noise(X, 0.2, rng, return_columns=True)
    assert len(cols) == 5
    assert np.array_equal(np.sort(out, axis=0), np.sort(X, axis=0))
    untouched = np.setdiff1d(np.arange(25), cols)
    assert np.array_equal(out[:, untouched], X[:, untouched])
    with pytest.raises(ConfigError):
        apply_feature_noise(X, 1.5, rng)


def test_derive_seed_stable():
    assert derive_seed(0, "a") == derive_seed(0, "a")
    assert derive_seed(0, "a") != derive_seed(1, "a")
    assert 0 <= derive_seed(3, "x", 1) < 2 ** 63


def test_config_validation_and_dict_round_trip():
    with pytest.raises(ConfigError):
        SynthConfig(positive_frac=1.0).validate()
    with pytest.raises(ConfigError):
        SynthConfig(n_features=5).validate()
    cfg = SynthConfig(seed=3, ground_truth=GroundTruthSpec(jitter=1.0))
    assert SynthConfig.from_dict(cfg.to_dict()) == cfg
    assert cfg.imbalance_ratio == pytest.approx(2.33, abs=0.01)
