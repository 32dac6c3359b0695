from datetime import datetime, timedelta

import numpy as np
import pytest

from emaboost.binning import discretize_equiwidth
from emaboost.ema import (
    CategoryRule,
    FeatureSpec,
    IndividualSeries,
    Observation,
    Study,
    ThresholdRule,
    build_targets,
    filter_individuals,
    outcome_rule_from_dict,
    pool_training_sets,
    read_study,
    sequential_split,
    write_study,
)
from emaboost.errors import (
    ConfigError,
    DataError,
    EmptyStudyError,
    InsufficientDataError,
    SchemaMismatch,
    SchemaViolation,
)
from emaboost.synth import SynthConfig, generate_study

from conftest import make_set

T0 = datetime(2024, 3, 1, 9, 0)
DRINK = CategoryRule(frozenset({"drink"}))


def series(times, outcomes, feats=None, ind="a"):
    feats = feats or [(0,)] * len(times)
    return IndividualSeries(ind, tuple(Observation(t, f, o) for t, f, o in zip(times, feats, outcomes)))


SCHEMA1 = (FeatureSpec.ordinal("x", 3),)


def test_feature_spec_validation():
    with pytest.raises(ConfigError):
        FeatureSpec.ordinal("x", 1)
    with pytest.raises(ConfigError):
        FeatureSpec.ordinal("x", 65)
    with pytest.raises(ConfigError):
        FeatureSpec.ordinal("x", 3, bin_edges=[2.0, 1.0])
    with pytest.raises(ConfigError):
        FeatureSpec("x", "nominal", 3)


def test_gap_rule_drops_late_successor():
    times = [T0, T0.replace(hour=10, minute=30), T0.replace(hour=14)]
    s = series(times, [None, "drink", "no-drink"], [(0,), (1,), (2,)])
    sup = build_targets(s, SCHEMA1, DRINK)
    assert len(sup) == 1
    assert sup.features.tolist() == [[0]]
    assert sup.labels.tolist() == [1.0]
    assert sup.timestamps[0] == np.datetime64("2024-03-01T09:00")


def test_single_observation_is_insufficient():
    with pytest.raises(InsufficientDataError, match="insufficient consecutive data"):
        build_targets(series([T0], [1.0]), SCHEMA1)


def test_gap_boundary_inclusive():
    sup = build_targets(series([T0, T0 + timedelta(hours=2)], [None, 1.0]), SCHEMA1)
    assert len(sup) == 1
    with pytest.raises(InsufficientDataError):
        build_targets(series([T0, T0 + timedelta(hours=2, minutes=1)], [None, 1.0]), SCHEMA1)


def test_incomplete_rows_deleted_listwise():
    times = [T0 + timedelta(hours=i) for i in range(4)]
    s = series(times, [None, 1.0, 0.0, 1.0], [(0,), (None,), (2,), (1,)])
    sup = build_targets(s, SCHEMA1)
    assert sup.features.ravel().tolist() == [0, 2]
    assert sup.labels.tolist() == [1.0, 1.0]


def test_outcome_rules():
    assert ThresholdRule(2.0)(2.0) == 1 and ThresholdRule(2.0)(1.5) == 0
    assert outcome_rule_from_dict({"category_map": {"mood": ["low"]}})("low") == 1
    assert outcome_rule_from_dict(None) == ThresholdRule()
    with pytest.raises(ConfigError):
        outcome_rule_from_dict({"unknown": 1})


def test_supervised_set_immutable_and_copied():
    X = np.zeros((3, 1), dtype=np.int32)
    s = make_set(X, [0, 1, 0], levels=[2])
    X[0, 0] = 1
    assert s.features[0, 0] == 0
    with pytest.raises(ValueError):
        s.features[0, 0] = 1
    with pytest.raises(SchemaViolation):
        make_set(np.zeros((3, 2)), [0, 1, 0], schema=SCHEMA1)


@pytest.mark.parametrize("n,expected", [(50, (35, 15)), (100, (70, 30)), (300, (210, 90)), (10, (7, 3))])
def test_sequential_split_sizes(n, expected):
    s = make_set(np.zeros((n, 1)), np.arange(n) % 2, levels=[2])
    tr, te = sequential_split(s, 0.7)
    assert (len(tr), len(te)) == expected
    assert tr.timestamps.max() < te.timestamps.min()


def test_sequential_split_infeasible():
    with pytest.raises(InsufficientDataError):
        sequential_split(make_set(np.zeros((1, 1)), [1], levels=[2]))


def _regular(ind, n, outcomes, per_day=6):
    times = [T0 + timedelta(days=i // per_day, hours=2 * (i % per_day)) for i in range(n)]
    return series(times, outcomes, ind=ind)


def test_filter_identity_and_minority():
    good = _regular("good", 60, [None] + [float(i % 3 == 0) for i in range(59)])
    flat = _regular("flat", 60, [None] + [1.0] * 59)
    study = Study(SCHEMA1, (good, flat))
    kept, report = filter_individuals(study, min_daily_obs=0, min_total_rows=0, min_minority=0)
    assert kept.ids == ["good", "flat"] and report == []
    kept, report = filter_individuals(study, min_minority=3)
    assert kept.ids == ["good"]
    assert [(e.individual_id, e.criterion) for e in report] == [("flat", "minority")]


def test_filter_all_excluded_raises_with_report():
    sparse = _regular("s", 10, [None] + [1.0, 0.0] * 4 + [1.0], per_day=2)
    with pytest.raises(EmptyStudyError) as info:
        filter_individuals(Study(SCHEMA1, (sparse,)))
    assert info.value.report[0].criterion == "daily_obs"


def test_pooling():
    a = make_set(np.zeros((35, 1)), np.arange(35) % 2, levels=[3])
    b = make_set(np.ones((35, 1)), np.arange(35) % 2, levels=[3])
    pooled = pool_training_sets([("a", a), ("b", b)])
    assert len(pooled) == 70
    assert list(pooled.individual_ids[[0, 69]]) == ["a", "b"]
    one = pool_training_sets([("a", a)])
    assert np.array_equal(one.features, a.features)
    c = make_set(np.zeros((5, 1)), [0, 1, 0, 1, 0], levels=[4])
    with pytest.raises(SchemaMismatch, match="'c'.*'a'"):
        pool_training_sets([("a", a), ("c", c)])


def test_discretize_examples():
    d = discretize_equiwidth([0.0, 1.2, 2.4, 3.6, 4.8, 6.0], 6)
    assert d.levels.tolist() == [0, 1, 2, 3, 4, 5] and not d.degenerate
    d = discretize_equiwidth([3.0] * 4, 6)
    assert d.degenerate and d.levels.tolist() == [0, 0, 0, 0]


def test_discretize_normal_occupancy():
    counts = np.zeros(6)
    for seed in range(20):
        lv = discretize_equiwidth(np.random.default_rng(seed).standard_normal(1000), 6).levels
        c = np.bincount(lv, minlength=6)
        assert c.min() > 0
        counts += c
    assert counts[2:4].min() > counts[[0, 1, 4, 5]].max()


def test_study_rejects_out_of_range_levels():
    with pytest.raises(SchemaViolation):
        Study(SCHEMA1, (series([T0], [1.0], [(3,)]),))
    with pytest.raises(DataError):
        series([T0 + timedelta(hours=1), T0], [None, 1.0])


def test_csv_round_trip(tmp_path):
    study = generate_study(SynthConfig(n_individuals=3, n_features=12, n_samples=12, seed=4))
    write_study(study, tmp_path / "s.csv", tmp_path / "s.json")
    back = read_study(tmp_path / "s.csv", tmp_path / "s.json")
    assert back.schema == study.schema
    assert back.individuals == study.individuals


def test_csv_bins_and_categories(tmp_path):
    (tmp_path / "d.csv").write_text(
        "individual_id,timestamp,hr,mood,event\n"
        "p1,2024-01-01T08:00,60,low,\n"
        "p1,2024-01-01T09:00,80,high,drink\n"
        "p1,2024-01-01T10:00,100,,none\n"
    )
    (tmp_path / "d.json").write_text(
        '{"features": [{"name": "hr", "bins": 4}, '
        '{"name": "mood", "kind": "categorical", "categories": ["low", "high"]}], '
        '"outcome_column": "event"}'
    )
    study = read_study(tmp_path / "d.csv", tmp_path / "d.json")
    assert study.schema[0].levels == 4 and study.schema[0].bin_edges == (70.0, 80.0, 90.0)
    feats = [o.features for o in study.individuals[0].observations]
    assert feats == [(0, 0), (2, 1), (3, None)]
    sup = build_targets(study.individuals[0], study.schema, DRINK, timedelta(hours=2))
    assert sup.labels.tolist() == [1.0, 0.0]
