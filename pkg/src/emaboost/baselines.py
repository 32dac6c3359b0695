"""Logistic regression on one-hot level encodings."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from scipy.special import expit, log_expit

from .ema import FeatureSpec, schema_fingerprint
from .errors import ModelFormatError, SchemaViolation, UnsupportedVersionError

MODEL_FORMAT = "emaboost.logreg"
MODEL_VERSION = 1


@dataclass(eq=False)
class LinearModel:
    weights: np.ndarray
    bias: float
    l2: float
    schema: tuple[FeatureSpec, ...]
    converged: bool = True
    n_iter: int = 0
    degenerate: bool = False
    loss_history: list[float] = field(default_factory=list)

    @property
    def fingerprint(self) -> str:
        return schema_fingerprint(self.schema)


def _offsets(schema) -> np.ndarray:
    return np.concatenate([[0], np.cumsum([f.levels for f in schema])]).astype(np.int64)


def one_hot(X, schema) -> np.ndarray:
    """Dense one-hot encoding with one column per (feature, level)."""
    X = np.asarray(X, dtype=np.int64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != len(schema):
        raise SchemaViolation(f"rows have {X.shape[1]} features, schema has {len(schema)}")
    for f, spec in enumerate(schema):
        col = X[:, f]
        if col.size and (col.min() < 0 or col.max() >= spec.levels):
            bad = int(col[(col < 0) | (col >= spec.levels)][0])
            raise SchemaViolation(f"feature {spec.name!r}: level {bad} outside [0, {spec.levels})")
    off = _offsets(schema)
    Z = np.zeros((X.shape[0], int(off[-1])))
    rows = np.arange(X.shape[0])
    for f in range(X.shape[1]):
        Z[rows, off[f] + X[:, f]] = 1.0
    return Z


def _loss_grad(theta, Z, y, l2):
    w, b = theta[:-1], theta[-1]
    z = Z @ w + b
    # mean log-loss: -(y log p + (1-y) log(1-p))
    loss = -np.mean(y * log_expit(z) + (1.0 - y) * log_expit(-z)) + 0.5 * l2 * (w @ w)
    r = expit(z) - y
    g = np.empty_like(theta)
    g[:-1] = Z.T @ r / y.size + l2 * w
    g[-1] = r.mean()
    return float(loss), g


def fit_logreg(train, l2: float = 0.01, max_iter: int = 5000, tol: float = 1e-6,
               init: np.ndarray | None = None) -> LinearModel:
    """Minimise mean log-loss + ``l2/2 * ||w||^2`` by full-batch gradient descent.

    Each iteration tries a Barzilai-Borwein step length and halves it until
    the Armijo condition holds, so every accepted step lowers the loss. The
    bias is not penalised.
    """
    schema = tuple(train.schema)
    y = np.asarray(train.labels, dtype=np.float64)
    Z = one_hot(train.features, schema)
    p = Z.shape[1]
    if y.size == 0 or np.ptp(y) == 0.0:
        rate = float(y[0]) if y.size else 0.5
        rate = min(max(rate, 1e-6), 1 - 1e-6)
        return LinearModel(np.zeros(p), math.log(rate / (1 - rate)), l2, schema, True, 0, True)

    theta = np.zeros(p + 1) if init is None else np.array(init, dtype=np.float64)
    loss, g = _loss_grad(theta, Z, y, l2)
    history = [loss]
    step = 1.0
    prev_theta = prev_g = None
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        if np.max(np.abs(g)) < tol:
            converged = True
            it -= 1
            break
        if prev_theta is not None:
            s_vec, y_vec = theta - prev_theta, g - prev_g
            sy = float(s_vec @ y_vec)
            if sy > 0:
                step = min(max(float(s_vec @ s_vec) / sy, 1e-10), 1e10)
        gg = float(g @ g)
        while True:
            cand = theta - step * g
            c_loss, c_g = _loss_grad(cand, Z, y, l2)
            if c_loss <= loss - 1e-4 * step * gg or step < 1e-16:
                break
            step *= 0.5
        if c_loss > loss:
            # no descent possible at machine precision
            converged = True
            break
        prev_theta, prev_g = theta, g
        theta, loss, g = cand, c_loss, c_g
        history.append(loss)
    else:
        converged = bool(np.max(np.abs(g)) < tol)
    return LinearModel(theta[:-1].copy(), float(theta[-1]), l2, schema, converged, it, False, history)


def predict_linear(model: LinearModel, x):
    """Positive-class probability; float for one row, array for a matrix."""
    Z = one_hot(x, model.schema)
    p = expit(Z @ model.weights + model.bias)
    return float(p[0]) if np.ndim(x) == 1 else p


def linear_score(model: LinearModel, x) -> np.ndarray:
    return one_hot(x, model.schema) @ model.weights + model.bias


def regularized_loss(model: LinearModel, train) -> float:
    Z = one_hot(train.features, model.schema)
    theta = np.append(model.weights, model.bias)
    return _loss_grad(theta, Z, np.asarray(train.labels, dtype=np.float64), model.l2)[0]


def linear_to_dict(model: LinearModel) -> dict[str, Any]:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "schema": [f.to_dict() for f in model.schema],
        "schema_fingerprint": model.fingerprint,
        "weights": model.weights.tolist(),
        "bias": model.bias,
        "l2": model.l2,
        "converged": model.converged,
        "n_iter": model.n_iter,
        "degenerate": model.degenerate,
    }


def linear_from_dict(doc: dict[str, Any]) -> LinearModel:
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ModelFormatError("not a linear model document")
    if doc.get("version") != MODEL_VERSION:
        raise UnsupportedVersionError(f"unsupported model version {doc.get('version')!r}")
    try:
        schema = tuple(FeatureSpec(e["name"], e["kind"], int(e["levels"]),
                                   tuple(e["bin_edges"]) if "bin_edges" in e else None,
                                   tuple(e["categories"]) if "categories" in e else None)
                       for e in doc["schema"])
        return LinearModel(np.array(doc["weights"], dtype=np.float64), float(doc["bias"]),
                           float(doc["l2"]), schema, bool(doc["converged"]), int(doc["n_iter"]),
                           bool(doc["degenerate"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed linear model document: {exc}") from exc


def save_linear(model: LinearModel, path) -> None:
    Path(path).write_text(json.dumps(linear_to_dict(model), sort_keys=True) + "\n")


def load_linear(path) -> LinearModel:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"cannot parse model document: {exc}") from exc
    return linear_from_dict(doc)
