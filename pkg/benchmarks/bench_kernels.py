"""Time the compiled boosting kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--rows 210] [--features 25] [--rounds 200]

Both backends fit the same data; the script also checks that they agree.
"""

import argparse
import time

import numpy as np

from emaboost import kernels
from emaboost.ebm import EbmConfig, fit_ebm, predict_score
from emaboost.synth import SynthConfig
from emaboost.experiment import ExperimentConfig, load_study, prepare_splits


def _train_set(rows, features, seed):
    cfg = ExperimentConfig(synthetic=SynthConfig(n_individuals=1, n_features=features,
                                                 n_samples=int(np.ceil(rows / 0.7)), seed=seed))
    study, rule = load_study(cfg)
    splits, _ = prepare_splits(study, rule, cfg.prep)
    return next(iter(splits.values()))[0]


def _time(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=210)
    ap.add_argument("--features", type=int, default=25)
    ap.add_argument("--rounds", type=int, default=200)
    ap.add_argument("--interactions", type=int, default=3)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    train = _train_set(args.rows, args.features, args.seed)
    cfg = EbmConfig(n_rounds=args.rounds, n_interactions=args.interactions)
    print(f"fit_ebm on {len(train)} rows x {args.features} features, "
          f"{args.rounds} rounds, {args.interactions} pairs (best of {args.repeats})")
    results = {}
    prev = kernels.BACKEND
    try:
        for backend in ("cython", "python"):
            try:
                kernels.use_backend(backend)
            except ImportError:
                print(f"  {backend:>7s}: unavailable")
                continue
            secs, model = _time(lambda: fit_ebm(train, cfg), args.repeats)
            results[backend] = (secs, predict_score(model, train.features))
            print(f"  {backend:>7s}: {secs:8.4f} s")
    finally:
        kernels.use_backend(prev)
    if len(results) == 2:
        (tc, sc), (tp, sp) = results["cython"], results["python"]
        print(f"  speed-up: {tp / tc:.1f}x; max |score difference| {np.max(np.abs(sc - sp)):.2e}")


if __name__ == "__main__":
    main()
