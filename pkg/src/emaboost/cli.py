"""Command-line entry point.

Verbs::

    emaboost generate    synthetic study -> CSV + schema sidecar
    emaboost prep        CSV -> supervised sets + exclusion report
    emaboost fit         run one regime
    emaboost experiment  run every configured regime
    emaboost grid        synthetic users x features x samples sweep
    emaboost inspect     EBM model document -> shape-function CSV

Configuration comes from an optional JSON/YAML file. Any field can be
overridden with ``--set dotted.key=value`` (values parsed as YAML, so
``--set grids.logreg_l2=[0.1,1]`` works). ``EMABOOST_OUTPUT_DIR`` supplies
the output directory when ``--output-dir`` is absent.

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 partial failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any

import yaml

from .ebm import extract_shape_functions, load_model, write_shape_csv
from .ema import write_study
from .errors import ConfigError, DataError, EmaBoostError, ModelFormatError
from .experiment import REGIMES, ExperimentConfig, load_study, prepare_splits, run_experiment, run_synthetic_grid
from .synth import generate_study

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_PARTIAL = 0, 1, 2, 3
OUTPUT_ENV = "EMABOOST_OUTPUT_DIR"

_log = logging.getLogger("emaboost")


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with the config-error code instead of argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _parse_value(text: str) -> Any:
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError:
        return text


def apply_overrides(doc: dict, assignments) -> dict:
    """Apply ``a.b.c=value`` assignments to a nested dict in place."""
    for item in assignments or ():
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        node = doc
        parts = key.split(".")
        for p in parts[:-1]:
            nxt = node.get(p)
            if nxt is None:
                nxt = node[p] = {}
            elif not isinstance(nxt, dict):
                raise ConfigError(f"cannot set {key!r}: {p!r} is not a section")
            node = nxt
        node[parts[-1]] = _parse_value(value)
    return doc


def read_config_file(path) -> dict:
    text = Path(path).read_text()
    try:
        doc = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must be a mapping")
    return doc


def build_config(args) -> ExperimentConfig:
    doc = read_config_file(args.config) if args.config else {}
    if getattr(args, "csv", None):
        doc.pop("synthetic", None)
        doc["csv"] = {**(doc.get("csv") or {}), "path": args.csv}
    if getattr(args, "schema", None):
        doc.setdefault("csv", {})
        doc["csv"]["schema"] = args.schema
    if getattr(args, "outcome_rule", None):
        doc.setdefault("csv", {})
        doc["csv"]["outcome_rule"] = _parse_value(args.outcome_rule)
    if args.seed is not None:
        doc["seed"] = args.seed
        if doc.get("synthetic") is not None:
            doc["synthetic"]["seed"] = args.seed
    apply_overrides(doc, args.set)
    if doc.get("csv") is None and doc.get("synthetic") is None:
        doc["synthetic"] = {"seed": doc.get("seed", 0)}
    out = args.output_dir or os.environ.get(OUTPUT_ENV)
    if out:
        doc["output_dir"] = out
    return ExperimentConfig.from_dict(doc).validate()


# -- verbs -------------------------------------------------------------------

def cmd_generate(args) -> int:
    cfg = build_config(args)
    if cfg.synthetic is None:
        raise ConfigError("generate needs a synthetic configuration")
    study = generate_study(cfg.synthetic)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_study(study, out / "study.csv", out / "schema.json")
    (out / "ground_truth.json").write_text(
        json.dumps(study.metadata["ground_truth"], indent=2, sort_keys=True) + "\n")
    print(f"wrote {len(study.individuals)} individuals to {out / 'study.csv'}")
    return EXIT_OK


def cmd_prep(args) -> int:
    cfg = build_config(args)
    study, rule = load_study(cfg)
    splits, exclusions = prepare_splits(study, rule, cfg.prep)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = [f.name for f in study.schema]
    with open(out / "supervised.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["individual_id", "split", "timestamp", *names, "label"])
        for ind_id, parts in splits.items():
            for split, data in zip(("train", "test"), parts):
                for t, row, y in zip(data.timestamps, data.features, data.labels):
                    w.writerow([ind_id, split, str(t), *row.tolist(), int(y)])
    with open(out / "exclusions.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["individual_id", "criterion", "detail"])
        for e in exclusions:
            w.writerow([e.individual_id, e.criterion, e.detail])
    print(f"retained {len(splits)} individuals, excluded {len(exclusions)}")
    return EXIT_OK


def _finish(result) -> int:
    for reps in result.reports.values():
        for r in reps:
            print(f"{r.method:>10s}  n={r.n:<4d} {r.cell()}")
    if result.partial_failure:
        for f in result.failures:
            print(f"failure: {f['regime']} {f['individual_id']}: {f['error']}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_fit(args) -> int:
    cfg = replace(build_config(args), regimes=(args.regime,))
    return _finish(run_experiment(cfg))


def cmd_experiment(args) -> int:
    cfg = build_config(args)
    if args.regimes:
        cfg = replace(cfg, regimes=tuple(args.regimes)).validate()
    return _finish(run_experiment(cfg))


def cmd_grid(args) -> int:
    cfg = build_config(args)
    rows = run_synthetic_grid(
        cfg, users=args.users, features=args.features, samples=args.samples,
        write_cells=args.write_cells,
        progress=lambda u, f, s: _log.info("finished cell users=%d features=%d samples=%d", u, f, s))
    print((Path(cfg.output_dir) / "grid_table.txt").read_text(), end="")
    return EXIT_PARTIAL if any(r.status != "ok" for r in rows) else EXIT_OK


def cmd_inspect(args) -> int:
    model = load_model(args.model)
    shapes = extract_shape_functions(model)
    out = Path(args.out) if args.out else Path(args.model).with_suffix(".shapes.csv")
    write_shape_csv(shapes, out)
    terms = [(m.name, m.importance) for m in shapes.mains] + [(p.name, p.importance) for p in shapes.pairs]
    terms.sort(key=lambda t: -t[1])
    print(f"intercept {shapes.intercept:.4f}; top terms by importance:")
    for name, imp in terms[:args.top]:
        print(f"  {name:<16s} {imp:.4f}")
    print(f"wrote {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="emaboost", description="EBM experiments on EMA studies.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    def configurable(p, data=True):
        p.add_argument("--config", help="JSON or YAML experiment configuration")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config field (dotted keys, YAML values); repeatable")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--output-dir", help=f"output directory (default: ${OUTPUT_ENV} or config)")
        if data:
            p.add_argument("--csv", help="study CSV (selects the csv data source)")
            p.add_argument("--schema", help="JSON schema sidecar for --csv")
            p.add_argument("--outcome-rule", help='e.g. "{threshold: 1}" or "{categories: [yes]}"')

    p = sub.add_parser("generate", help="write a synthetic study as CSV")
    configurable(p, data=False)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("prep", help="build supervised sets and an exclusion report")
    configurable(p)
    p.set_defaults(func=cmd_prep)

    p = sub.add_parser("fit", help="run a single regime")
    p.add_argument("regime", choices=REGIMES)
    configurable(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("experiment", help="run all configured regimes")
    p.add_argument("--regimes", nargs="+", choices=REGIMES)
    configurable(p)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("grid", help="synthetic sweep over users, features and samples")
    p.add_argument("--users", type=int, nargs="+", default=[20, 50, 100])
    p.add_argument("--features", type=int, nargs="+", default=[25, 60])
    p.add_argument("--samples", type=int, nargs="+", default=[50, 100, 300])
    p.add_argument("--write-cells", action="store_true", help="keep per-cell reports and models")
    configurable(p, data=False)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("inspect", help="export shape functions of an EBM model document")
    p.add_argument("model")
    p.add_argument("--out", help="CSV path (default: next to the model)")
    p.add_argument("--top", type=int, default=10)
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, ModelFormatError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except EmaBoostError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
