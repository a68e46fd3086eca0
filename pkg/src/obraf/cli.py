"""Command-line entry point: ``obraf {train,predict,bench,sweep,rank}``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .dataset import DataError, fit_normalizer, load_csv
from .ensemble import KINDS, EnsembleParams, load_model, save_model, train_model
from .harness import (SWEEPABLE, ConfigError, ExperimentConfig, accuracy, emit_report,
                      format_table, load_config, read_report, run_experiment, sweep_parameter)
from .numerics import NumericError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for data errors here
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _depth(raw: str):
    return None if raw.lower() == "none" else int(raw)


def _add_model_flags(p):
    p.add_argument("--max-depth", type=_depth, help="depth limit ('none' for unlimited)")
    p.add_argument("--q", type=int, help="features per node (default round(sqrt(d)))")
    p.add_argument("--top-fraction", type=float)
    p.add_argument("--vote", choices=("soft", "hard"))
    p.add_argument("--routing", choices=("top2", "all"))
    p.add_argument("--partition-mode", choices=("augment", "replace"))


def _model_overrides(args) -> dict:
    keys = ("max_depth", "q", "top_fraction", "vote", "routing", "partition_mode")
    return {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}


def _add_experiment_flags(p):
    p.add_argument("--config", help="INI experiment file; flags given here override it")
    p.add_argument("--data", nargs="+", help="dataset CSV files")
    p.add_argument("--classifiers", nargs="+", choices=KINDS)
    p.add_argument("-T", "--trees", type=int, dest="T")
    p.add_argument("--folds", type=int)
    p.add_argument("--seed", type=int, dest="master_seed")
    p.add_argument("--normalization", choices=("std", "variance"))
    p.add_argument("--label-column")
    p.add_argument("--jobs", type=int, dest="n_jobs")
    _add_model_flags(p)


def _label_column(raw):
    if raw is None:
        return -1
    try:
        return int(raw)
    except ValueError:
        return raw


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="obraf", description="Oblique random forests and the RVFL-routed hybrid.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="fit a model on a CSV and serialize it")
    p.add_argument("--data", required=True)
    p.add_argument("--classifier", choices=KINDS, default="obrafm")
    p.add_argument("-T", "--trees", type=int, default=500, dest="T")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--normalization", choices=("std", "variance"), default="std")
    p.add_argument("--label-column")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True, help="model path (.json or .json.gz)")
    _add_model_flags(p)

    p = sub.add_parser("predict", help="predict labels for a CSV with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--label-column", help="label column, if the CSV has one (default: last, when present)")
    p.add_argument("--out", help="write predicted labels here instead of stdout")

    p = sub.add_parser("bench", help="cross-validated comparison from an experiment config")
    _add_experiment_flags(p)
    p.add_argument("--out", default="report.json")

    p = sub.add_parser("sweep", help="accuracy as one parameter varies")
    _add_experiment_flags(p)
    p.add_argument("--parameter", required=True, choices=SWEEPABLE)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--out", help="write the series as JSON")

    p = sub.add_parser("rank", help="recompute ranks of an existing report")
    p.add_argument("--report", required=True)
    p.add_argument("--out", help="write the re-ranked report here (default: print the table)")
    return ap


def _experiment(args) -> ExperimentConfig:
    config = load_config(args.config) if args.config else None
    if config is None:
        if not args.data:
            raise ConfigError("give --config or --data")
        config = ExperimentConfig(datasets=list(args.data))
    updates = {}
    if args.data:
        updates["datasets"] = list(args.data)
    for name in ("classifiers", "T", "folds", "master_seed", "normalization", "n_jobs"):
        v = getattr(args, name)
        if v is not None:
            updates[name] = v
    if args.label_column is not None:
        updates["label_column"] = _label_column(args.label_column)
    config = replace(config, **updates)
    flags = _model_overrides(args)
    if flags:
        overrides = {k: dict(v) for k, v in config.overrides.items()}
        for c in config.classifiers:
            overrides.setdefault(c, {}).update(flags)
        config = replace(config, overrides=overrides)
    return config.validate()


def _cmd_train(args) -> int:
    data = load_csv(args.data, _label_column(args.label_column))
    try:
        params = EnsembleParams(**_model_overrides(args))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if args.T < 1:
        raise ConfigError("-T must be at least 1")
    norm = fit_normalizer(data, args.normalization)
    model = train_model(args.classifier, data, args.T, params, args.seed, norm, args.jobs)
    save_model(model, args.out)
    train_acc = 100.0 * accuracy(model.predict(data.features), data.labels)
    print(f"trained {args.classifier} with T={args.T} on {data.name} (n={data.n}, d={data.d}); "
          f"training accuracy {train_acc:.2f}%; saved to {args.out}")
    return EXIT_OK


def _read_features(path, d: int, label_column):
    """Feature matrix (and raw labels, if present) from a CSV for prediction."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{path}: empty file")

    def numeric(cell):
        try:
            return np.isfinite(float(cell))
        except ValueError:
            return False

    width = len(rows[0])
    header = None
    # a header has some text cell where the next row holds a number
    if len(rows) > 1 and any(not numeric(a) and numeric(b) for a, b in zip(rows[0], rows[1])):
        header = [c.strip() for c in rows[0]]
        rows = rows[1:]
    if width == d:
        label_idx = None
    elif width == d + 1:
        lc = _label_column(label_column)
        if isinstance(lc, str):
            if header is None or lc not in header:
                raise DataError(f"{path}: no column named {lc!r}")
            label_idx = header.index(lc)
        else:
            label_idx = lc % width
    else:
        raise DataError(f"{path}: model expects {d} features, file has {width} columns")
    X = np.empty((len(rows), d))
    labels = []
    for i, row in enumerate(rows):
        if len(row) != width:
            raise DataError(f"{path}: row {i + 1} has {len(row)} fields, expected {width}")
        cells = [c for j, c in enumerate(row) if j != label_idx]
        for j, c in enumerate(cells):
            if not numeric(c):
                raise DataError(f"{path}: row {i + 1}, feature {j}: cannot parse {c!r}")
            X[i, j] = float(c)
        if label_idx is not None:
            labels.append(row[label_idx].strip())
    return X, (labels if label_idx is not None else None)


def _cmd_predict(args) -> int:
    try:
        model = load_model(args.model)
    except (OSError, ValueError, KeyError) as exc:
        raise DataError(f"cannot load model {args.model}: {exc}") from exc
    X, truth = _read_features(args.data, len(model.normalizer.means), args.label_column)
    pred = model.predict(X)
    names = model.class_names or [str(i) for i in range(model.num_classes)]
    out = [names[i] for i in pred]
    text = "\n".join(out) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if truth is not None:
        acc = 100.0 * np.mean([a == b for a, b in zip(out, truth)])
        print(f"accuracy {acc:.2f}% on {len(truth)} labelled rows", file=sys.stderr)
    return EXIT_OK


def _cmd_bench(args) -> int:
    report = run_experiment(_experiment(args))
    js, txt = emit_report(report, args.out)
    sys.stdout.write(format_table(report))
    print(f"report written to {js} and {txt}")
    return EXIT_OK


def _parse_values(parameter: str, raw: str):
    out = []
    for part in raw.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            out.append(_depth(part) if parameter == "max_depth" else int(part))
        except ValueError as exc:
            raise ConfigError(f"bad {parameter} value {part!r}") from exc
    return out


def _cmd_sweep(args) -> int:
    config = _experiment(args)
    values = _parse_values(args.parameter, args.values)
    series = sweep_parameter(config, args.parameter, values)
    for v, acc in series:
        print(f"{args.parameter}={v}\t{acc:.2f}")
    if args.out:
        doc = {"parameter": args.parameter, "dataset": config.datasets[0], "classifier": config.classifiers[0],
               "master_seed": config.master_seed, "values": [v for v, _ in series],
               "accuracy": [a for _, a in series]}
        Path(args.out).write_text(json.dumps(doc, indent=2) + "\n")
    return EXIT_OK


def _cmd_rank(args) -> int:
    try:
        report = read_report(args.report)
    except (OSError, ValueError, KeyError) as exc:
        raise DataError(f"cannot read report {args.report}: {exc}") from exc
    report.rerank()
    if args.out:
        emit_report(report, args.out)
    sys.stdout.write(format_table(report))
    return EXIT_OK


COMMANDS = {"train": _cmd_train, "predict": _cmd_predict, "bench": _cmd_bench, "sweep": _cmd_sweep,
            "rank": _cmd_rank}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
