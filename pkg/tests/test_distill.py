import csv

import numpy as np
import pytest
from scipy.special import expit

from emaboost.distill import (
    SoftLabelSet,
    build_soft_dataset,
    fit_student,
    run_distillation,
    student_probability,
    temperature_soften,
    write_distillation_table,
)
from emaboost.ebm import IDENTITY, EbmConfig, EbmModel, fit_ebm, predict_proba, predict_score, serialize_model
from emaboost.ema import FeatureSpec, pool_training_sets, sequential_split
from emaboost.errors import ConfigError, DataError, SchemaMismatch
from emaboost.evaluate import roc_auc

from conftest import make_set


def study_sets(n_ind=3, n=80, seed=0):
    rng = np.random.default_rng(seed)
    train, test = {}, {}
    for i in range(n_ind):
        X = rng.integers(0, 4, size=(n, 3))
        y = (rng.random(n) < expit(1.5 * (X[:, 0] - 1.5))).astype(int)
        train[f"p{i}"], test[f"p{i}"] = sequential_split(make_set(X, y, levels=[4, 4, 4]))
    return train, test


def test_soften_examples():
    assert temperature_soften(0.0, 7.0) == 0.5
    assert abs(temperature_soften(3.0, 1e6) - 0.5) < 1e-5
    assert temperature_soften(2.0, 1.0) == pytest.approx(0.8807970779778823, abs=1e-12)
    assert temperature_soften(2.0, 5.0) == pytest.approx(0.598687660112452, abs=1e-12)
    for bad in (0.0, -1.0):
        with pytest.raises(ConfigError):
            temperature_soften(1.0, bad)


def test_soften_identities():
    s = np.linspace(-10, 10, 2001)
    np.testing.assert_allclose(temperature_soften(s, 1.0), 1 / (1 + np.exp(-s)), atol=1e-12, rtol=0)
    for T in (0.5, 1.0, 3.0, 100.0):
        np.testing.assert_allclose(temperature_soften(-s, T), 1 - temperature_soften(s, T), atol=1e-15)
    Ts = np.array([0.5, 1, 2, 5, 10, 100])
    dist = np.abs(np.array([temperature_soften(s, T) for T in Ts]) - 0.5)
    nz = s != 0
    assert np.all(np.diff(dist[:, nz], axis=0) < 0)
    p = temperature_soften(np.array([-800.0, 800.0]), 1.0)
    assert 0 < p[0] and p[1] < 1


def test_build_soft_dataset():
    train, _ = study_sets()
    tr = train["p0"]
    zero = EbmModel.intercept_only(0.0, tr.schema)
    assert np.all(build_soft_dataset(zero, tr, 3.0).soft_targets == 0.5)
    teacher = fit_ebm(tr, EbmConfig(n_rounds=30))
    soft1 = build_soft_dataset(teacher, tr, 1.0)
    assert np.array_equal(soft1.soft_targets, predict_proba(teacher, tr.features))
    assert len(soft1) == len(tr) and soft1.teacher_fingerprint == teacher.fingerprint
    soft5 = build_soft_dataset(teacher, tr, 5.0)
    assert np.all(np.abs(soft5.soft_targets - 0.5) <= np.abs(soft1.soft_targets - 0.5))
    other = make_set(np.zeros((5, 1)), [0, 1, 0, 1, 0], levels=[2])
    with pytest.raises(SchemaMismatch):
        build_soft_dataset(teacher, other, 1.0)


def test_soft_label_set_invariants():
    schema = (FeatureSpec.categorical("a"),)
    with pytest.raises(DataError):
        SoftLabelSet(np.zeros((2, 1)), [0.0, 0.5], 1.0, "x", schema)
    with pytest.raises(DataError):
        SoftLabelSet(np.zeros((2, 1)), [0.5], 1.0, "x", schema)


def test_student_limits():
    schema = (FeatureSpec.ordinal("a", 3),)
    X = np.arange(30)[:, None] % 3
    flat = SoftLabelSet(X, np.full(30, 0.5), 1.0, "x", schema)
    st = fit_student(flat)
    assert st.degenerate and st.intercept == pytest.approx(0.5)
    targets = np.linspace(0.2, 0.8, 30)
    st = fit_student(SoftLabelSet(X, targets, 1.0, "x", schema), EbmConfig(n_rounds=0, link=IDENTITY))
    assert st.intercept == pytest.approx(targets.mean())
    with pytest.raises(ConfigError):
        fit_student(flat, EbmConfig())
    big = EbmModel(0.0, [np.array([-1.0, 0.5, 2.0])], [], [], IDENTITY, schema)
    assert student_probability(big, np.array([[0], [1], [2]])).tolist() == [0.0, 0.5, 1.0]


def test_run_distillation_report_temperatures(tmp_path):
    train, test = study_sets()
    res = run_distillation(train, test, EbmConfig(n_rounds=40), EbmConfig(n_rounds=40),
                           temperatures=(1.0, 5.0, 100.0), k=3)
    assert set(res.chosen) == set(train)
    for ind in train:
        temps = sorted(r.temperature for r in res.rows if r.individual_id == ind)
        assert temps == [1.0, 5.0, 100.0]
        assert sum(r.selected for r in res.rows if r.individual_id == ind) == 1
    assert res.fixed_report(5.0).method == "kd_T5"
    assert res.report().n == 3
    write_distillation_table(res, tmp_path / "d.csv")
    rows = list(csv.DictReader(open(tmp_path / "d.csv")))
    assert list(rows[0]) == ["individual_id", "T", "cv_auc", "test_auc", "n_train", "n_test", "selected"]
    assert len(rows) == 9


def test_pooling_of_one_and_intercept_teacher():
    train, test = study_sets(n_ind=1)
    cfg = EbmConfig(n_rounds=30)
    res = run_distillation(train, test, cfg, EbmConfig(n_rounds=30), temperatures=(1.0,), k=2)
    own = fit_ebm(train["p0"], cfg)
    assert serialize_model(res.teacher) == serialize_model(own)

    train, test = study_sets()
    flat = EbmModel.intercept_only(0.3, train["p0"].schema)
    res = run_distillation(train, test, temperatures=(1.0, 5.0), k=2, teacher=flat,
                           report_temperatures=(1.0,))
    for ind, st in res.students.items():
        assert st.degenerate
    assert all(r.test_auc == 0.5 for r in res.rows)


def test_student_auc_rank_invariant():
    train, test = study_sets()
    teacher = fit_ebm(pool_training_sets(list(train.items())), EbmConfig(n_rounds=40))
    st = fit_student(build_soft_dataset(teacher, train["p1"], 2.0), EbmConfig(n_rounds=40, link=IDENTITY))
    s = predict_score(st, test["p1"].features)
    y = test["p1"].labels
    assert roc_auc(y, s) == roc_auc(y, s ** 3 + s)
