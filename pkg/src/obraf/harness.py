"""Cross-validated benchmarking: experiment configs, timing, Friedman ranks,
report files and parameter sweeps."""

from __future__ import annotations

import configparser
import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .dataset import Dataset, DataError, apply_normalizer, fit_normalizer, kfold_splits, load_csv
from .ensemble import KINDS, EnsembleParams, derive_seed, train_model

logger = logging.getLogger(__name__)

LABELS = {"raf": "RaF", "obrafm": "obRaF(M)", "obrafl": "obRaFL"}
REPORT_FORMAT = "obraf-report"
SWEEPABLE = ("max_depth", "T", "q")


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass
class ExperimentConfig:
    datasets: list[str]
    classifiers: list[str] = field(default_factory=lambda: list(KINDS))
    T: int = 500
    folds: int = 4
    master_seed: int = 0
    overrides: dict[str, dict] = field(default_factory=dict)
    normalization: str = "std"
    label_column: int | str = -1
    n_jobs: int = 1

    def validate(self) -> ExperimentConfig:
        if not self.datasets:
            raise ConfigError("at least one dataset is required")
        if not self.classifiers:
            raise ConfigError("at least one classifier is required")
        unknown = [c for c in self.classifiers if c not in KINDS]
        if unknown:
            raise ConfigError(f"unknown classifiers {unknown}; choose from {list(KINDS)}")
        if len(set(self.classifiers)) != len(self.classifiers):
            raise ConfigError("classifiers listed more than once")
        if self.folds < 2:
            raise ConfigError("folds must be at least 2")
        if self.T < 1:
            raise ConfigError("T must be at least 1")
        if self.normalization not in ("std", "variance"):
            raise ConfigError("normalization must be 'std' or 'variance'")
        for name in self.overrides:
            if name not in KINDS:
                raise ConfigError(f"override section for unknown classifier {name!r}")
        for name in self.classifiers:
            self.params_for(name)
        return self

    def params_for(self, classifier: str) -> EnsembleParams:
        try:
            return EnsembleParams(**self.overrides.get(classifier, {}))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad parameters for {classifier}: {exc}") from exc


def _parse_value(raw: str):
    raw = raw.strip()
    if raw.lower() in ("none", "null", ""):
        return None
    for conv in (int, float):
        try:
            return conv(raw)
        except ValueError:
            pass
    return raw


def _split_list(raw: str) -> list[str]:
    return [p.strip() for p in raw.replace("\n", ",").split(",") if p.strip()]


def load_config(path) -> ExperimentConfig:
    """Read an INI-style config.

    The ``[experiment]`` section holds the top-level fields (lists are comma
    separated); a section named after a classifier holds its overrides::

        [experiment]
        datasets = data/yeast.csv, data/statlog_image.csv
        classifiers = raf, obrafm, obrafl
        T = 50

        [obrafm]
        max_depth = 10
    """
    path = Path(path)
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.optionxform = str  # keep "T" upper case
    try:
        if not cp.read(path):
            raise ConfigError(f"cannot read config file {path}")
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if "experiment" not in cp:
        raise ConfigError(f"{path}: missing [experiment] section")
    sec = cp["experiment"]
    base = path.parent
    kw: dict = {}
    for key, raw in sec.items():
        if key == "datasets":
            kw[key] = [str(p if Path(p).is_absolute() else base / p) for p in _split_list(raw)]
        elif key == "classifiers":
            kw[key] = _split_list(raw)
        elif key in ("T", "folds", "master_seed", "n_jobs"):
            try:
                kw[key] = int(raw)
            except ValueError as exc:
                raise ConfigError(f"{path}: {key} must be an integer") from exc
        elif key == "label_column":
            kw[key] = _parse_value(raw)
        elif key == "normalization":
            kw[key] = raw.strip()
        else:
            raise ConfigError(f"{path}: unknown key {key!r} in [experiment]")
    kw["overrides"] = {s: {k: _parse_value(v) for k, v in cp[s].items()}
                       for s in cp.sections() if s != "experiment"}
    if "datasets" not in kw:
        raise ConfigError(f"{path}: no datasets listed")
    return ExperimentConfig(**kw).validate()


# ---------------------------------------------------------------- report


@dataclass
class ClassifierResult:
    accuracy: float  # mean over folds, percent
    fold_accuracies: list[float]
    train_seconds: list[float]
    mean_nodes: float

    @property
    def mean_train_seconds(self) -> float:
        return float(np.mean(self.train_seconds))


@dataclass
class EvaluationReport:
    classifiers: list[str]
    datasets: list[dict]  # name, path, n, d, C, class_names
    results: dict[str, dict[str, ClassifierResult]]
    protocol: dict
    ranks: dict[str, dict[str, float]] = field(default_factory=dict)
    mean_ranks: dict[str, float] = field(default_factory=dict)
    mean_accuracy: dict[str, float] = field(default_factory=dict)

    def accuracy_table(self) -> dict[str, dict[str, float]]:
        return {ds: {c: r.accuracy for c, r in row.items()} for ds, row in self.results.items()}

    def rerank(self) -> EvaluationReport:
        table = self.accuracy_table()
        self.ranks, self.mean_ranks = friedman_ranks(table, self.classifiers)
        self.mean_accuracy = {c: float(np.mean([table[d][c] for d in table])) for c in self.classifiers}
        return self

    def to_dict(self) -> dict:
        return {
            "format": REPORT_FORMAT,
            "protocol": self.protocol,
            "classifiers": self.classifiers,
            "datasets": self.datasets,
            "results": {d: {c: asdict(r) for c, r in row.items()} for d, row in self.results.items()},
            "ranks": self.ranks,
            "mean_ranks": self.mean_ranks,
            "mean_accuracy": self.mean_accuracy,
        }

    @classmethod
    def from_dict(cls, d: dict) -> EvaluationReport:
        if d.get("format") != REPORT_FORMAT:
            raise ValueError("not an obraf evaluation report")
        results = {ds: {c: ClassifierResult(**r) for c, r in row.items()} for ds, row in d["results"].items()}
        return cls(d["classifiers"], d["datasets"], results, d["protocol"], d["ranks"], d["mean_ranks"],
                   d["mean_accuracy"])


def friedman_ranks(table: dict[str, dict[str, float]], classifiers: list[str]):
    """Per-dataset ranks (1 = most accurate, ties share the average) and their means."""
    ranks = {}
    for ds, row in table.items():
        acc = np.array([row[c] for c in classifiers], dtype=float)
        r = rankdata(-acc, method="average")
        ranks[ds] = {c: float(v) for c, v in zip(classifiers, r)}
    mean = {c: float(np.mean([ranks[ds][c] for ds in ranks])) for c in classifiers}
    return ranks, mean


def measure_training(builder, data):
    """Run ``builder(data)`` under a wall clock.

    Returns ``(model, seconds, mean_nodes)`` where the node count is averaged
    over every tree in the model (all partition trees for the hybrid).
    """
    t0 = time.perf_counter()
    model = builder(data)
    seconds = time.perf_counter() - t0
    counts = model.node_counts()
    return model, seconds, float(np.mean(counts)) if counts else 0.0


def accuracy(predicted, truth) -> float:
    predicted, truth = np.asarray(predicted), np.asarray(truth)
    return float(np.count_nonzero(predicted == truth)) / len(truth)


def _load(path, config: ExperimentConfig) -> Dataset:
    try:
        return load_csv(path, config.label_column)
    except FileNotFoundError as exc:
        raise DataError(f"dataset {path}: file not found") from exc
    except DataError as exc:
        raise DataError(f"dataset {path}: {exc}") from exc


def _builder(kind, config: ExperimentConfig, normalizer, seed, T=None, params=None):
    params = params or config.params_for(kind)
    return lambda data: train_model(kind, data, T or config.T, params, seed, normalizer, config.n_jobs)


def run_experiment(config: ExperimentConfig) -> EvaluationReport:
    """Stratified k-fold evaluation of every classifier on every dataset.

    The normalizer is fitted on each training fold only. Fold assignment and
    model seeds derive from ``master_seed``, so all classifiers see identical
    folds.
    """
    config.validate()
    meta, results = [], {}
    for di, path in enumerate(config.datasets):
        data = _load(path, config)
        meta.append({"name": data.name, "path": str(path), "n": data.n, "d": data.d,
                     "C": data.num_classes, "class_names": data.class_names})
        rng = np.random.default_rng(derive_seed(config.master_seed, di))
        folds = kfold_splits(data.labels, config.folds, rng)
        row = {}
        for kind in config.classifiers:
            accs, secs, nodes = [], [], []
            for fi, (tr, te) in enumerate(folds):
                train = data.subset(tr)
                norm = fit_normalizer(train, config.normalization)
                builder = _builder(kind, config, norm, derive_seed(config.master_seed, fi))
                model, sec, mean_nodes = measure_training(builder, train)
                accs.append(100.0 * accuracy(model.predict(data.features[te]), data.labels[te]))
                secs.append(sec)
                nodes.append(mean_nodes)
                logger.info("%s %s fold %d: %.2f%% in %.1fs", data.name, kind, fi, accs[-1], sec)
            row[kind] = ClassifierResult(float(np.mean(accs)), accs, secs, float(np.mean(nodes)))
        if data.name in results:
            raise ConfigError(f"two datasets are named {data.name!r}")
        results[data.name] = row
    protocol = {"cv": f"stratified {config.folds}-fold, one repetition", "folds": config.folds,
                "T": config.T, "master_seed": config.master_seed, "normalization": config.normalization,
                "overrides": config.overrides}
    return EvaluationReport(list(config.classifiers), meta, results, protocol).rerank()


def format_table(report: EvaluationReport) -> str:
    """Plain-text accuracy table with mean-accuracy and mean-rank rows."""
    cols = [LABELS.get(c, c) for c in report.classifiers]
    names = list(report.results)
    w0 = max([len("Mean Acc."), len("Rank"), *map(len, names)]) + 2
    w = max(10, *map(len, cols)) + 2
    p = report.protocol
    lines = [f"# protocol: {p.get('cv')}, T={p.get('T')}, seed={p.get('master_seed')}",
             "Dataset".ljust(w0) + "".join(c.rjust(w) for c in cols)]
    for ds in names:
        lines.append(ds.ljust(w0) + "".join(f"{report.results[ds][c].accuracy:.2f}".rjust(w)
                                            for c in report.classifiers))
    lines.append("Mean Acc.".ljust(w0) + "".join(f"{report.mean_accuracy[c]:.2f}".rjust(w)
                                                 for c in report.classifiers))
    lines.append("Rank".ljust(w0) + "".join(f"{report.mean_ranks[c]:.2f}".rjust(w) for c in report.classifiers))
    return "\n".join(lines) + "\n"


def emit_report(report: EvaluationReport, path) -> tuple[Path, Path]:
    """Write ``path`` (JSON) and a sibling ``.txt`` table; returns both paths."""
    if not report.classifiers:
        raise ConfigError("report has no classifiers")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    txt = path.with_suffix(".txt")
    txt.write_text(format_table(report))
    return path, txt


def read_report(path) -> EvaluationReport:
    return EvaluationReport.from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------- sweeps


def sweep_parameter(config: ExperimentConfig, parameter: str, values, holdout_fold: int = 0):
    """Accuracy (percent) on one stratified holdout for each parameter value.

    Uses the first dataset and classifier of ``config``; the holdout is fold
    ``holdout_fold`` of a ``config.folds``-way split. A sweep over ``T``
    trains the largest ensemble once and scores its prefixes, which equal the
    smaller ensembles exactly because member seeds depend only on the index.
    """
    config.validate()
    if len(config.datasets) != 1 or len(config.classifiers) != 1:
        raise ConfigError("a sweep needs exactly one dataset and one classifier")
    if parameter not in SWEEPABLE:
        raise ConfigError(f"cannot sweep {parameter!r}; choose from {SWEEPABLE}")
    values = list(values)
    if not values:
        raise ConfigError("no sweep values given")
    data = _load(config.datasets[0], config)
    for v in values:
        ok = v is None and parameter == "max_depth"
        ok = ok or (isinstance(v, (int, np.integer)) and not isinstance(v, bool) and
                    (v >= 0 if parameter == "max_depth" else v >= 1))
        if not ok or (parameter == "q" and v > data.d):
            raise ConfigError(f"invalid {parameter} value {v!r}")

    kind = config.classifiers[0]
    rng = np.random.default_rng(derive_seed(config.master_seed, 0))
    tr, te = kfold_splits(data.labels, config.folds, rng)[holdout_fold]
    train = data.subset(tr)
    norm = fit_normalizer(train, config.normalization)
    seed = derive_seed(config.master_seed, holdout_fold)
    base = config.params_for(kind)
    Xte, yte = data.features[te], data.labels[te]

    series = []
    if parameter == "T":
        model = _builder(kind, config, norm, seed, T=max(values))(train)
        for v in values:
            series.append((v, 100.0 * accuracy(truncate(model, v).predict(Xte), yte)))
        return series
    for v in values:
        params = replace(base, **{parameter: v})
        model = _builder(kind, config, norm, seed, params=params)(train)
        series.append((v, 100.0 * accuracy(model.predict(Xte), yte)))
    return series


def truncate(model, T: int):
    """The first ``T`` members of a trained ensemble as a model of its own."""
    if hasattr(model, "trees"):
        return replace(model, trees=model.trees[:T], seeds=model.seeds[:T])
    return replace(model, base_classifiers=model.base_classifiers[:T])
