import numpy as np
import pytest

from emaboost.ema import FeatureSpec, SupervisedSet


def make_set(X, y, schema=None, levels=None):
    """SupervisedSet with minute-spaced timestamps; schema inferred from ``levels``."""
    X = np.asarray(X, dtype=np.int32)
    if schema is None:
        if levels is None:
            levels = [max(2, int(X[:, f].max()) + 1) for f in range(X.shape[1])]
        schema = [FeatureSpec.ordinal(f"f{f}", L) for f, L in enumerate(levels)]
    ts = np.datetime64("2024-01-01T00:00") + np.arange(len(y)).astype("timedelta64[m]")
    return SupervisedSet(X, np.asarray(y, dtype=np.float64), ts, schema)


def xor_set(n=400, extra=0, seed=0):
    """Two binary features whose parity is the label, plus ``extra`` noise features."""
    rng = np.random.default_rng(seed)
    X = rng.integers(0, 2, size=(n, 2 + extra))
    y = X[:, 0] ^ X[:, 1]
    schema = [FeatureSpec.categorical(f"b{f}") for f in range(2 + extra)]
    return make_set(X, y, schema)


def brute_auc(labels, scores):
    labels = np.asarray(labels)
    scores = np.asarray(scores, dtype=np.float64)
    pos, neg = scores[labels == 1], scores[labels == 0]
    wins = 0.0
    for p in pos:
        for q in neg:
            wins += 1.0 if p > q else 0.5 if p == q else 0.0
    return wins / (len(pos) * len(neg))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
