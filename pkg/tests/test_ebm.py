import csv
import json
import math

import numpy as np
import pytest

from emaboost.ebm import (
    IDENTITY,
    EbmConfig,
    EbmModel,
    deserialize_model,
    extract_shape_functions,
    fast_rank_interactions,
    fit_ebm,
    load_model,
    predict_proba,
    predict_score,
    rank_pairs,
    save_model,
    serialize_model,
    write_shape_csv,
)
from emaboost.ebm.model import model_to_dict
from emaboost.ema import FeatureSpec
from emaboost.errors import ConfigError, ModelFormatError, SchemaViolation, UnsupportedVersionError
from emaboost.evaluate import roc_auc

from conftest import make_set, xor_set

NOVAL = dict(validation_frac=0.0)


def random_set(seed, n=150, d=4):
    rng = np.random.default_rng(seed)
    levels = rng.integers(2, 7, size=d)
    X = np.column_stack([rng.integers(0, L, size=n) for L in levels])
    logit = (X[:, 0] - levels[0] / 2) + np.where(X[:, 1] % 2 == 0, 1.0, -1.0)
    y = (rng.random(n) < 1 / (1 + np.exp(-logit))).astype(int)
    return make_set(X, y, levels=levels)


def test_perfect_binary_predictor():
    rng = np.random.default_rng(0)
    x = rng.integers(0, 2, size=(200, 1))
    data = make_set(np.column_stack([x, rng.integers(0, 4, size=(200, 1))]), x[:, 0], levels=[2, 4])
    model = fit_ebm(data, EbmConfig(n_rounds=50, **NOVAL))
    assert roc_auc(data.labels, predict_score(model, data.features)) == 1.0
    assert model.main_terms[0][1] > model.main_terms[0][0]


def test_constant_labels_give_intercept_only():
    data = make_set(np.random.default_rng(1).integers(0, 3, size=(40, 2)), np.ones(40), levels=[3, 3])
    model = fit_ebm(data)
    assert model.degenerate
    scores = predict_score(model, data.features)
    assert np.ptp(scores) == 0.0 and scores[0] == pytest.approx(math.log((1 - 1e-6) / 1e-6))


@pytest.mark.parametrize("k,lo,hi", [(1, 0.95, 1.0), (0, 0.0, 0.6)])
def test_xor_needs_an_interaction(k, lo, hi):
    data = xor_set(400)
    model = fit_ebm(data, EbmConfig(n_rounds=100, n_interactions=k, **NOVAL))
    auc = roc_auc(data.labels, predict_score(model, data.features))
    assert lo <= auc <= hi
    if k:
        assert model.pairs == [(0, 1)]


def test_fast_ranks_planted_xor_first():
    data = xor_set(800, extra=8, seed=3)
    r = data.labels - data.labels.mean()
    ranking = fast_rank_interactions(data, r)
    assert ranking.pairs[0] == (0, 1)
    assert len(ranking) == 45
    s = ranking.strengths
    assert s[0] >= 10 * s[1]
    assert np.all(np.diff(s) <= 0)


def test_fast_zero_residuals():
    data = xor_set(50, extra=2)
    assert np.all(rank_pairs(data.features, data.n_levels, np.zeros(50)).strengths == 0)


def test_fast_null_main_effects():
    rng = np.random.default_rng(5)
    X = rng.integers(0, 6, size=(1000, 6))
    y = (rng.random(1000) < 1 / (1 + np.exp(-(X[:, 0] - 2.5)))).astype(int)
    data = make_set(X, y, levels=[6] * 6)
    model = fit_ebm(data, EbmConfig(n_rounds=200, **NOVAL))
    r = data.labels - predict_proba(model, data.features)
    top = fast_rank_interactions(data, r).strengths[0]
    assert top < 0.05 * np.sum(r ** 2)


def test_predict_lookup_and_additivity():
    schema = [FeatureSpec.categorical("a"), FeatureSpec.ordinal("b", 3)]
    m = EbmModel.intercept_only(0.7, schema)
    assert predict_score(m, np.array([1, 2])) == 0.7
    m = EbmModel(0.0, [np.array([-1.0, 1.0]), np.zeros(3)], [], [], "logistic", tuple(schema))
    assert predict_score(m, np.array([[0, 0], [1, 0]])).tolist() == [-1.0, 1.0]
    model = fit_ebm(random_set(2), EbmConfig(n_rounds=30, n_interactions=1, **NOVAL))
    paired = {f for p in model.pairs for f in p}
    free = [f for f in range(4) if f not in paired]
    x = np.array([1, 1, 1, 1])
    for f in free:
        x2 = x.copy()
        x2[f] = 0
        diff = predict_score(model, x2) - predict_score(model, x)
        assert diff == pytest.approx(model.main_terms[f][0] - model.main_terms[f][1], abs=1e-12)


def test_predict_proba_values():
    schema = [FeatureSpec.categorical("a")]
    assert predict_proba(EbmModel.intercept_only(0.0, schema), np.array([0])) == 0.5
    assert predict_proba(EbmModel.intercept_only(2.0, schema), np.array([0])) == pytest.approx(0.8807970779778823)
    assert predict_proba(EbmModel.intercept_only(-2.0, schema), np.array([0])) == pytest.approx(1 - 0.8807970779778823)
    with pytest.raises(ConfigError):
        predict_proba(EbmModel.intercept_only(0.0, schema, IDENTITY), np.array([0]))


def test_schema_violation_names_feature():
    model = fit_ebm(random_set(0), EbmConfig(n_rounds=5))
    bad = np.zeros(4, dtype=int)
    bad[2] = 99
    with pytest.raises(SchemaViolation, match="'f2'"):
        predict_score(model, bad)
    with pytest.raises(SchemaViolation):
        predict_score(model, np.zeros(3, dtype=int))


@pytest.mark.parametrize("seed", range(20))
def test_training_loss_non_increasing_and_centred(seed):
    data = random_set(seed)
    model = fit_ebm(data, EbmConfig(n_rounds=60, n_interactions=2, interaction_rounds=30, **NOVAL))
    loss = np.array(model.history["main_train_loss"])
    assert np.all(np.diff(loss) <= 1e-12)
    if "pair_train_loss" in model.history:
        assert np.all(np.diff(model.history["pair_train_loss"]) <= 1e-12)
    for t, c in zip(model.main_terms, model.main_counts):
        assert abs(np.sum(c * t)) / c.sum() < 1e-9
    for t, c in zip(model.pair_terms, model.pair_counts):
        assert abs(np.sum(c * t)) / c.sum() < 1e-9


def test_identity_link_sse_decreases_each_round():
    rng = np.random.default_rng(7)
    X = rng.integers(0, 5, size=(120, 3))
    y = 0.3 * X[:, 0] - 0.2 * X[:, 2] + rng.normal(0, 0.1, 120)
    model = fit_ebm(make_set(X, y, levels=[5, 5, 5]),
                    EbmConfig(n_rounds=40, link=IDENTITY, min_samples_leaf=1, **NOVAL))
    mse = np.array(model.history["main_train_loss"])
    assert np.all(np.diff(mse) < 0)


def test_identity_intercept_when_no_rounds():
    y = np.random.default_rng(3).random(30)
    model = fit_ebm(make_set(np.zeros((30, 1)), y, levels=[2]), EbmConfig(n_rounds=0, link=IDENTITY))
    assert model.intercept == pytest.approx(y.mean())


def test_early_stopping_rolls_back_to_best_round():
    data = random_set(11, n=200)
    model = fit_ebm(data, EbmConfig(n_rounds=80, validation_frac=0.2))
    val = np.array(model.history["main_val_loss"])
    b = model.history["main_best_round"]
    assert val[b] == val.min() and np.argmin(val) == b


def test_fit_is_deterministic():
    a = fit_ebm(random_set(4), EbmConfig(n_rounds=40, n_interactions=2))
    b = fit_ebm(random_set(4), EbmConfig(n_rounds=40, n_interactions=2))
    assert serialize_model(a) == serialize_model(b)


def test_serialization_round_trip(tmp_path):
    model = fit_ebm(random_set(6), EbmConfig(n_rounds=40, n_interactions=2))
    save_model(model, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    rows = np.random.default_rng(0).integers(0, 2, size=(100, 4))
    assert np.array_equal(predict_score(model, rows), predict_score(back, rows))


def test_serialization_errors():
    text = serialize_model(fit_ebm(random_set(6), EbmConfig(n_rounds=5)))
    with pytest.raises(ModelFormatError):
        deserialize_model(text[: len(text) // 2])
    doc = json.loads(text)
    doc["version"] = 2
    with pytest.raises(UnsupportedVersionError):
        deserialize_model(json.dumps(doc))
    doc = json.loads(text)
    doc["schema"][0]["levels"] += 1
    with pytest.raises(ModelFormatError):
        deserialize_model(json.dumps(doc))
    with pytest.raises(ModelFormatError):
        deserialize_model("[]")


def test_config_validation():
    with pytest.raises(ConfigError):
        EbmConfig(max_leaves=9).validate()
    with pytest.raises(ConfigError):
        EbmConfig().replace(depth=3)
    with pytest.raises(ConfigError):
        fit_ebm(random_set(0), EbmConfig(n_interactions=7))


def test_shapes(tmp_path):
    schema = [FeatureSpec.ordinal("a", 3)]
    sh = extract_shape_functions(EbmModel.intercept_only(0.2, schema))
    assert np.all(sh.mains[0].contributions == 0) and sh.total_importance == 0.0

    rng = np.random.default_rng(9)
    x = rng.integers(0, 6, size=(600, 1))
    single = fit_ebm(make_set(x, (x[:, 0] >= 3).astype(int), levels=[6]), EbmConfig(n_rounds=100, **NOVAL))
    assert np.all(np.diff(extract_shape_functions(single).mains[0].contributions) >= 0)

    X = np.column_stack([x, rng.integers(0, 6, size=(600, 1))])
    data = make_set(X, (X[:, 0] >= 3).astype(int), levels=[6, 6])
    model = fit_ebm(data, EbmConfig(n_rounds=100, n_interactions=1, **NOVAL))
    shapes = extract_shape_functions(model)
    assert shapes.mains[0].importance > 10 * shapes.mains[1].importance
    write_shape_csv(shapes, tmp_path / "s.csv")
    rows = list(csv.DictReader(open(tmp_path / "s.csv")))
    assert rows[0]["term"] == "intercept"
    assert len(rows) == 1 + 12 + 36 * len(model.pairs)
    assert model_to_dict(model)["format"] == "emaboost.ebm"
