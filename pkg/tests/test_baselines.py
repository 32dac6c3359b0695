import json

import numpy as np
import pytest
from scipy.optimize import minimize

from emaboost.baselines import (
    LinearModel,
    _loss_grad,
    fit_logreg,
    linear_from_dict,
    linear_score,
    linear_to_dict,
    load_linear,
    one_hot,
    predict_linear,
    regularized_loss,
    save_linear,
)
from emaboost.ema import FeatureSpec
from emaboost.errors import ModelFormatError, SchemaViolation, UnsupportedVersionError
from emaboost.evaluate import roc_auc

from conftest import make_set, xor_set


def noisy_set(seed, n=120):
    rng = np.random.default_rng(seed)
    X = rng.integers(0, 4, size=(n, 3))
    y = (rng.random(n) < 1 / (1 + np.exp(-(X[:, 0] - 1.5)))).astype(int)
    return make_set(X, y, levels=[4, 4, 4])


def test_one_hot_layout():
    schema = [FeatureSpec.ordinal("a", 3), FeatureSpec.categorical("b")]
    Z = one_hot(np.array([[2, 0], [0, 1]]), schema)
    assert Z.tolist() == [[0, 0, 1, 1, 0], [1, 0, 0, 0, 1]]
    with pytest.raises(SchemaViolation, match="'b'"):
        one_hot(np.array([[0, 2]]), schema)


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("l2", [0.01, 1.0])
def test_matches_scipy_optimum(seed, l2):
    data = noisy_set(seed)
    model = fit_logreg(data, l2=l2, tol=1e-9, max_iter=20000)
    assert model.converged
    Z = one_hot(data.features, data.schema)
    res = minimize(lambda t: _loss_grad(t, Z, data.labels, l2), np.zeros(Z.shape[1] + 1),
                   jac=True, method="L-BFGS-B", options={"gtol": 1e-12, "ftol": 1e-15, "maxiter": 10000})
    assert regularized_loss(model, data) == pytest.approx(res.fun, abs=1e-9)
    if l2 >= 1.0:
        np.testing.assert_allclose(model.weights, res.x[:-1], atol=1e-5)


def test_loss_history_monotone():
    model = fit_logreg(noisy_set(1), l2=0.01)
    assert np.all(np.diff(model.loss_history) <= 0)


def test_separable_and_xor():
    x = np.arange(40) % 8
    data = make_set(x[:, None], (x >= 4).astype(int), levels=[8])
    model = fit_logreg(data, l2=0.01)
    assert roc_auc(data.labels, linear_score(model, data.features)) == 1.0
    xor = xor_set(400)
    model = fit_logreg(xor, l2=0.01)
    assert roc_auc(xor.labels, linear_score(model, xor.features)) <= 0.6


def test_strong_penalty_gives_base_rate():
    data = noisy_set(2)
    model = fit_logreg(data, l2=1e6)
    assert np.max(np.abs(model.weights)) < 1e-5
    np.testing.assert_allclose(predict_linear(model, data.features), data.labels.mean(), atol=1e-4)


def test_predict_linear_values():
    schema = (FeatureSpec.categorical("a"),)
    zero = LinearModel(np.zeros(2), 0.0, 0.0, schema)
    assert predict_linear(zero, np.array([1])) == 0.5
    bias = LinearModel(np.zeros(2), 2.0, 0.0, schema)
    assert predict_linear(bias, np.array([0])) == pytest.approx(0.8807970779778823)
    m = LinearModel(np.array([0.3, -1.2]), 0.4, 0.0, schema)
    neg = LinearModel(-m.weights, -m.bias, 0.0, schema)
    X = np.array([[0], [1]])
    np.testing.assert_allclose(predict_linear(neg, X), 1 - predict_linear(m, X), atol=1e-15)


def test_single_class_is_degenerate():
    model = fit_logreg(make_set(np.zeros((10, 1)), np.zeros(10), levels=[2]))
    assert model.degenerate and predict_linear(model, np.array([0])) == pytest.approx(1e-6)


def test_serialization(tmp_path):
    model = fit_logreg(noisy_set(3))
    save_linear(model, tmp_path / "m.json")
    back = load_linear(tmp_path / "m.json")
    X = noisy_set(4).features
    assert np.array_equal(predict_linear(model, X), predict_linear(back, X))
    doc = linear_to_dict(model)
    doc["version"] = 9
    with pytest.raises(UnsupportedVersionError):
        linear_from_dict(doc)
    (tmp_path / "bad.json").write_text(json.dumps(linear_to_dict(model))[:40])
    with pytest.raises(ModelFormatError):
        load_linear(tmp_path / "bad.json")
