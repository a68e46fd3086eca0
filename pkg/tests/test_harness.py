import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from obraf.dataset import DataError, Dataset
from obraf.ensemble import dumps_model, train_model
from obraf.harness import (ConfigError, EvaluationReport, ExperimentConfig, emit_report, format_table,
                           friedman_ranks, load_config, measure_training, read_report, run_experiment,
                           sweep_parameter, truncate)

# accuracy table of the four forests on ten benchmarks
TABLE4 = {
    "Chess-krvk": (70.48, 68.19, 74.35, 75.06),
    "Letter": (96, 96.53, 97.02, 97.58),
    "Optical": (97.16, 96.72, 97.08, 97.27),
    "Pendigits": (95.31, 96.94, 97.13, 97.15),
    "Plant margin": (85.5, 82.82, 82.92, 82.98),
    "Plant shape": (64.06, 70.25, 70.56, 70.87),
    "Statlog-image": (97.66, 97.53, 98.05, 98.27),
    "USPS": (93.54, 93.55, 93.87, 93.94),
    "W-qua-white": (68.38, 69.24, 69.26, 69.49),
    "Yeast": (62.67, 63.14, 63.41, 63.48),
}
NAMES4 = ["raf", "obraf", "obrafm", "obrafl"]


def sort_rank_oracle(accs):
    """Positions in a descending sort, tied groups sharing their mean position."""
    order = sorted(range(len(accs)), key=lambda i: -accs[i])
    ranks = [0.0] * len(accs)
    pos = 0
    while pos < len(order):
        end = pos
        while end + 1 < len(order) and accs[order[end + 1]] == accs[order[pos]]:
            end += 1
        for k in range(pos, end + 1):
            ranks[order[k]] = (pos + end) / 2 + 1
        pos = end + 1
    return ranks


def write_csv(path, X, y):
    with open(path, "w") as fh:
        fh.write(",".join(f"x{j}" for j in range(X.shape[1])) + ",class\n")
        for row, lab in zip(X, y):
            fh.write(",".join(repr(float(v)) for v in row) + f",c{lab}\n")
    return path


@pytest.fixture
def toy_csv(tmp_path):
    r = np.random.default_rng(0)
    centers = np.array([[0, 0, 0], [3, 0, 0], [0, 3, 0]])
    X = np.vstack([c + 0.7 * r.standard_normal((24, 3)) for c in centers])
    y = np.repeat(np.arange(3), 24)
    return write_csv(tmp_path / "toy.csv", X, y)


# ---------------------------------------------------------------- ranks


def test_two_classifier_ranks():
    ranks, mean = friedman_ranks({"d": {"a": 90, "b": 80}}, ["a", "b"])
    assert ranks["d"] == {"a": 1.0, "b": 2.0} and mean == {"a": 1.0, "b": 2.0}


def test_tied_best_share_rank():
    ranks, _ = friedman_ranks({"d": {"a": 90, "b": 90, "c": 70}}, ["a", "b", "c"])
    assert ranks["d"] == {"a": 1.5, "b": 1.5, "c": 3.0}


def test_table4_mean_ranks_reproduced():
    table = {ds: dict(zip(NAMES4, accs)) for ds, accs in TABLE4.items()}
    _, mean = friedman_ranks(table, NAMES4)
    # [PAPER] mean ranks 3.3, 3.4, 2.2 and 1.1
    assert [round(mean[c], 1) for c in NAMES4] == [3.3, 3.4, 2.2, 1.1]
    three = ["raf", "obrafm", "obrafl"]
    _, mean3 = friedman_ranks(table, three)
    assert mean3["raf"] > mean3["obrafm"] > mean3["obrafl"]


@settings(max_examples=200, deadline=None)
@given(st.lists(st.lists(st.integers(0, 6), min_size=3, max_size=3), min_size=1, max_size=6))
def test_ranks_match_sort_oracle(rows):
    names = ["a", "b", "c"]
    table = {f"d{i}": {n: float(v) * 10 for n, v in zip(names, row)} for i, row in enumerate(rows)}
    ranks, mean = friedman_ranks(table, names)
    for ds, row in table.items():
        oracle = sort_rank_oracle([row[n] for n in names])
        assert [ranks[ds][n] for n in names] == oracle
        assert sum(ranks[ds].values()) == 6
        assert all(1 <= ranks[ds][n] <= 3 for n in names)
    for n in names:
        assert mean[n] == pytest.approx(np.mean([ranks[d][n] for d in ranks]))


# ---------------------------------------------------------------- timing


def test_measure_training_single_leaf():
    # identical rows cannot be split, so every tree is a single leaf
    ds = Dataset(np.zeros((4, 1)), np.array([0, 1, 0, 1]), 2)
    _, sec, nodes = measure_training(lambda d: train_model("raf", d, 1, master_seed=0), ds)
    assert nodes == 1.0 and sec > 0


def test_hybrid_nodes_average_all_partition_trees(toy_csv):
    from obraf.dataset import load_csv
    ds = load_csv(toy_csv)
    model, _, nodes = measure_training(lambda d: train_model("obrafl", d, 2), ds)
    counts = [t for b in model.base_classifiers for t in b.partition_trees if t is not None]
    assert nodes == pytest.approx(np.mean(model.node_counts())) and len(model.node_counts()) == len(counts)


# ---------------------------------------------------------------- experiments


def test_run_experiment_and_report_roundtrip(tmp_path, toy_csv):
    cfg = ExperimentConfig([str(toy_csv)], ["raf", "obrafm", "obrafl"], T=3, folds=3, master_seed=1)
    rep = run_experiment(cfg)
    res = rep.results["toy"]
    for c, r in res.items():
        assert 0 <= r.accuracy <= 100 and len(r.fold_accuracies) == 3
        assert r.accuracy == pytest.approx(np.mean(r.fold_accuracies))
        assert all(s > 0 for s in r.train_seconds) and r.mean_nodes >= 1
    assert sum(rep.ranks["toy"].values()) == 6
    assert rep.protocol["folds"] == 3 and "3-fold" in rep.protocol["cv"]
    assert rep.datasets[0]["class_names"] == ["c0", "c1", "c2"]

    js, txt = emit_report(rep, tmp_path / "out" / "report.json")
    back = read_report(js)
    assert back.to_dict() == rep.to_dict()
    assert json.loads(js.read_text()) == rep.to_dict()
    table = txt.read_text()
    assert "stratified 3-fold" in table.splitlines()[0]
    lines = table.splitlines()
    assert sum(l.startswith("toy") for l in lines) == 1
    assert any(l.startswith("Mean Acc.") for l in lines) and any(l.startswith("Rank") for l in lines)


def test_experiment_deterministic(toy_csv):
    cfg = ExperimentConfig([str(toy_csv)], ["obrafm"], T=2, folds=2, master_seed=3)

    def strip(rep):
        d = rep.to_dict()
        for row in d["results"].values():
            for r in row.values():
                r.pop("train_seconds")
        return d

    assert strip(run_experiment(cfg)) == strip(run_experiment(cfg))


def test_config_validation(toy_csv):
    with pytest.raises(ConfigError):
        ExperimentConfig([], ["raf"]).validate()
    with pytest.raises(ConfigError):
        ExperimentConfig([str(toy_csv)], []).validate()
    with pytest.raises(ConfigError):
        ExperimentConfig([str(toy_csv)], ["raf"], folds=1).validate()
    with pytest.raises(ConfigError):
        ExperimentConfig([str(toy_csv)], ["svm"]).validate()
    with pytest.raises(ConfigError):
        ExperimentConfig([str(toy_csv)], ["raf"], overrides={"raf": {"depth": 3}}).validate()


def test_empty_classifier_report_rejected(tmp_path):
    rep = EvaluationReport([], [], {}, {})
    with pytest.raises(ConfigError):
        emit_report(rep, tmp_path / "r.json")


def test_load_failure_names_dataset(tmp_path):
    bad = tmp_path / "broken.csv"
    bad.write_text("x,c\n1,a\nzz,b\n")
    with pytest.raises(DataError, match="broken.csv"):
        run_experiment(ExperimentConfig([str(bad)], ["raf"], T=1))
    with pytest.raises(DataError, match="missing.csv"):
        run_experiment(ExperimentConfig([str(tmp_path / "missing.csv")], ["raf"], T=1))


def test_stratification_error(tmp_path):
    p = write_csv(tmp_path / "tiny.csv", np.arange(6.0)[:, None], np.array([0, 0, 0, 0, 0, 1]))
    with pytest.raises(DataError, match="fewer than"):
        run_experiment(ExperimentConfig([str(p)], ["raf"], T=1, folds=2))


def test_load_config(tmp_path, toy_csv):
    cfg = tmp_path / "exp.ini"
    cfg.write_text(f"""
[experiment]
datasets = {toy_csv.name}
classifiers = raf, obrafl
T = 7
folds = 3
master_seed = 11
normalization = variance  ; or std
n_jobs = 2
label_column = class

[obrafl]          ; overrides
max_depth = 5
partition_mode = replace # ablation
""")
    c = load_config(cfg)
    assert c.datasets == [str(tmp_path / toy_csv.name)]
    assert (c.classifiers, c.T, c.folds, c.master_seed, c.normalization, c.n_jobs, c.label_column) == \
        (["raf", "obrafl"], 7, 3, 11, "variance", 2, "class")
    assert c.overrides == {"obrafl": {"max_depth": 5, "partition_mode": "replace"}}
    assert c.params_for("obrafl").max_depth == 5


@pytest.mark.parametrize("body", ["[other]\nx=1\n", "[experiment]\nT = 5\n", "[experiment]\ndatasets=a\nT=x\n",
                                  "[experiment]\ndatasets=a\nbogus=1\n", "not an ini"])
def test_bad_config_files(tmp_path, body):
    p = tmp_path / "c.ini"
    p.write_text(body)
    with pytest.raises(ConfigError):
        load_config(p)


# ---------------------------------------------------------------- sweeps


def test_truncated_ensemble_equals_smaller_ensemble(toy_csv):
    from obraf.dataset import load_csv
    ds = load_csv(toy_csv)
    for kind in ("raf", "obrafl"):
        big = train_model(kind, ds, 5, master_seed=2)
        small = train_model(kind, ds, 3, master_seed=2)
        assert dumps_model(truncate(big, 3)) == dumps_model(small)


def test_sweeps(toy_csv):
    cfg = ExperimentConfig([str(toy_csv)], ["obrafm"], T=3, folds=3)
    s = sweep_parameter(cfg, "max_depth", [0, 1, 3, None])
    assert [v for v, _ in s] == [0, 1, 3, None]
    assert all(0 <= a <= 100 for _, a in s)
    assert s[0][1] < s[2][1]  # a root-only tree is a prior vote
    assert len(sweep_parameter(cfg, "q", [1, 3])) == 2  # q = d is allowed
    t = sweep_parameter(cfg, "T", [1, 2, 4])
    assert [v for v, _ in t] == [1, 2, 4]


def test_sweep_errors(toy_csv):
    cfg = ExperimentConfig([str(toy_csv)], ["raf"], T=2)
    for param, values in [("q", [4]), ("q", [0]), ("T", [0]), ("max_depth", [-1]), ("depth", [1]), ("T", [])]:
        with pytest.raises(ConfigError):
            sweep_parameter(cfg, param, values)
    with pytest.raises(ConfigError):
        sweep_parameter(ExperimentConfig([str(toy_csv)], ["raf", "obrafm"]), "T", [1])


def test_format_table_layout(toy_csv):
    rep = run_experiment(ExperimentConfig([str(toy_csv)], ["raf", "obrafm"], T=1, folds=2))
    lines = format_table(rep).splitlines()
    assert lines[1].split()[1:] == ["RaF", "obRaF(M)"]
    assert len(lines) == 5
