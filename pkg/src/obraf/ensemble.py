"""Bagged forests of axis-parallel or oblique trees, and the RVFL-routed hybrid.

Every tree (or hybrid base classifier) gets its own seed derived from the
master seed and its index, so the trained model does not depend on how the
work is scheduled across processes.
"""

from __future__ import annotations

import gzip
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from .dataset import Dataset, NormalizationParams, apply_normalizer, draw_bag, fit_normalizer
from .rvfl import RvflModel, sample_config, score, top_two, train_rvfl
from .tree import (TreeNode, TreeParams, count_nodes, grow_tree, predict_tree, tree_from_dict,
                   tree_to_dict)

KINDS = ("raf", "obrafm", "obrafl")
FORMAT = "obraf-model"
FORMAT_VERSION = 1


def derive_seed(master_seed: int, index: int) -> int:
    """Independent 64-bit seed for member ``index`` of an ensemble."""
    ss = np.random.SeedSequence(master_seed, spawn_key=(index,))
    return int(ss.generate_state(1, np.uint64)[0])


def default_q(d: int) -> int:
    return max(1, round(math.sqrt(d)))


@dataclass(frozen=True)
class EnsembleParams:
    q: int | None = None  # None: round(sqrt(d))
    max_depth: int | None = None
    top_fraction: float = 0.5
    vote: str = "soft"  # forests: "soft" averages leaf distributions, "hard" counts argmaxes
    routing: str = "top2"  # hybrid at test time: "top2" or "all" partition trees
    partition_mode: str = "augment"  # hybrid: a missed true class adds ("augment") or replaces
    second_plane: bool = True  # oblique nodes: bisect both proximal planes, or use the first alone

    def __post_init__(self):
        if self.vote not in ("soft", "hard"):
            raise ValueError(f"vote must be 'soft' or 'hard', not {self.vote!r}")
        if self.routing not in ("top2", "all"):
            raise ValueError(f"routing must be 'top2' or 'all', not {self.routing!r}")
        if self.partition_mode not in ("augment", "replace"):
            raise ValueError(f"partition_mode must be 'augment' or 'replace', not {self.partition_mode!r}")

    def tree_params(self, d: int, split_kind: str) -> TreeParams:
        q = default_q(d) if self.q is None else min(self.q, d)
        return TreeParams(q=q, max_depth=self.max_depth, top_fraction=self.top_fraction,
                          split_kind=split_kind, second_plane=self.second_plane)


@dataclass
class ForestModel:
    kind: str
    trees: list[TreeNode]
    normalizer: NormalizationParams
    seeds: list[int]
    params: EnsembleParams
    num_classes: int
    class_names: list[str] | None = None

    def predict_proba(self, X) -> np.ndarray:
        Z = apply_normalizer(np.atleast_2d(np.asarray(X, dtype=float)), self.normalizer)
        votes = np.zeros((Z.shape[0], self.num_classes))
        for tree in self.trees:
            p = predict_tree(tree, Z)
            if self.params.vote == "hard":
                p = np.eye(self.num_classes)[p.argmax(axis=1)]
            votes += p
        return votes / len(self.trees)

    def predict(self, X) -> np.ndarray:
        return self.predict_proba(X).argmax(axis=1)

    def node_counts(self) -> list[int]:
        return [count_nodes(t) for t in self.trees]


@dataclass
class HybridBaseClassifier:
    router: RvflModel
    partition_trees: list[TreeNode | None]  # one slot per class; None for empty partitions
    bag_seed: int


@dataclass
class HybridModel:
    base_classifiers: list[HybridBaseClassifier]
    normalizer: NormalizationParams
    params: EnsembleParams
    num_classes: int
    class_names: list[str] | None = None
    kind: str = field(default="obrafl", init=False)

    @property
    def seeds(self) -> list[int]:
        return [b.bag_seed for b in self.base_classifiers]

    def predict_proba(self, X) -> np.ndarray:
        Z = apply_normalizer(np.atleast_2d(np.asarray(X, dtype=float)), self.normalizer)
        votes = np.zeros((Z.shape[0], self.num_classes))
        for base in self.base_classifiers:
            votes += base_vote(base, Z, self.params.routing)
        return votes / len(self.base_classifiers)

    def predict(self, X) -> np.ndarray:
        return self.predict_proba(X).argmax(axis=1)

    def node_counts(self) -> list[int]:
        return [count_nodes(t) for b in self.base_classifiers for t in b.partition_trees if t is not None]


# ---------------------------------------------------------------- forests


def _prepare(data: Dataset, normalizer: NormalizationParams | None):
    if data.num_classes < 2:
        raise ValueError("need at least two classes")
    if normalizer is None:
        normalizer = fit_normalizer(data)
    return apply_normalizer(data.features, normalizer), normalizer


def _forest_member(X, y, num_classes, tree_params, seed) -> TreeNode:
    rng = np.random.default_rng(seed)
    bag = draw_bag(len(y), rng)
    return grow_tree(X[bag.indices], y[bag.indices], num_classes, tree_params, rng)


def train_forest(data: Dataset, kind: str = "obrafm", T: int = 500, params: EnsembleParams | None = None,
                 master_seed: int = 0, normalizer: NormalizationParams | None = None,
                 n_jobs: int = 1) -> ForestModel:
    """Bag ``T`` trees: axis-parallel for ``"raf"``, MPSVM-oblique for ``"obrafm"``.

    ``data`` holds raw features; they are normalized with ``normalizer``
    (fitted on ``data`` when omitted), which is stored with the model.
    """
    if kind not in ("raf", "obrafm"):
        raise ValueError(f"forest kind must be 'raf' or 'obrafm', not {kind!r}")
    if T < 1:
        raise ValueError("T must be at least 1")
    params = params or EnsembleParams()
    X, normalizer = _prepare(data, normalizer)
    tp = params.tree_params(data.d, "axis_parallel" if kind == "raf" else "oblique")
    seeds = [derive_seed(master_seed, t) for t in range(T)]
    trees = Parallel(n_jobs=n_jobs)(
        delayed(_forest_member)(X, data.labels, data.num_classes, tp, s) for s in seeds)
    return ForestModel(kind, list(trees), normalizer, seeds, params, data.num_classes, data.class_names)


def predict_forest(model: ForestModel, X) -> np.ndarray:
    """Argmax of the averaged tree votes; ties go to the lower class id."""
    return model.predict(X)


# ---------------------------------------------------------------- hybrid


def partition_bag(router: RvflModel, X, y, mode: str = "augment") -> list[np.ndarray]:
    """Row indices of ``X`` assigned to each class partition.

    A row joins the partitions of its two highest-scoring classes. If its
    true class is not among them it also joins the true-class partition
    (``mode="augment"``) or goes there alone (``mode="replace"``).
    """
    y = np.asarray(y)
    top = top_two(score(router, np.atleast_2d(X)))
    hit = (top == y[:, None]).any(axis=1)
    parts = []
    for c in range(router.num_classes):
        in_top = (top == c).any(axis=1)
        if mode == "replace":
            in_top &= hit
        parts.append(np.flatnonzero(in_top | (~hit & (y == c))))
    return parts


def _hybrid_member(X, y, num_classes, tree_params, seed, mode) -> HybridBaseClassifier:
    rng = np.random.default_rng(seed)
    bag = draw_bag(len(y), rng)
    Xb, yb = X[bag.indices], y[bag.indices]
    router = train_rvfl(Xb, yb, num_classes, sample_config(rng), rng)
    trees = []
    for rows in partition_bag(router, Xb, yb, mode):
        trees.append(grow_tree(Xb[rows], yb[rows], num_classes, tree_params, rng) if len(rows) else None)
    return HybridBaseClassifier(router, trees, seed)


def train_hybrid(data: Dataset, T: int = 500, params: EnsembleParams | None = None, master_seed: int = 0,
                 normalizer: NormalizationParams | None = None, n_jobs: int = 1) -> HybridModel:
    """Bag ``T`` base classifiers, each an RVFL router over per-class oblique trees."""
    if T < 1:
        raise ValueError("T must be at least 1")
    params = params or EnsembleParams()
    X, normalizer = _prepare(data, normalizer)
    tp = params.tree_params(data.d, "oblique")
    seeds = [derive_seed(master_seed, t) for t in range(T)]
    bases = Parallel(n_jobs=n_jobs)(
        delayed(_hybrid_member)(X, data.labels, data.num_classes, tp, s, params.partition_mode)
        for s in seeds)
    return HybridModel(list(bases), normalizer, params, data.num_classes, data.class_names)


def base_vote(base: HybridBaseClassifier, Z: np.ndarray, routing: str = "top2") -> np.ndarray:
    """Mean class distribution of the partition trees a row is routed to.

    Rows whose routed trees are all absent get a zero vote.
    """
    n, C = Z.shape[0], len(base.partition_trees)
    total = np.zeros((n, C))
    hits = np.zeros(n)
    if routing == "top2":
        top = top_two(score(base.router, Z))
    for c, tree in enumerate(base.partition_trees):
        if tree is None:
            continue
        rows = np.flatnonzero((top == c).any(axis=1)) if routing == "top2" else np.arange(n)
        if len(rows):
            total[rows] += predict_tree(tree, Z[rows])
            hits[rows] += 1
    return np.divide(total, hits[:, None], out=np.zeros_like(total), where=hits[:, None] > 0)


def predict_hybrid(model: HybridModel, X) -> np.ndarray:
    return model.predict(X)


# ---------------------------------------------------------------- dispatch


def train_model(kind: str, data: Dataset, T: int, params: EnsembleParams | None = None, master_seed: int = 0,
                normalizer: NormalizationParams | None = None, n_jobs: int = 1):
    if kind == "obrafl":
        return train_hybrid(data, T, params, master_seed, normalizer, n_jobs)
    if kind in ("raf", "obrafm"):
        return train_forest(data, kind, T, params, master_seed, normalizer, n_jobs)
    raise ValueError(f"unknown classifier {kind!r}; expected one of {KINDS}")


# ---------------------------------------------------------------- serialization


def model_to_dict(model: ForestModel | HybridModel) -> dict:
    out = {
        "format": FORMAT,
        "version": FORMAT_VERSION,
        "kind": model.kind,
        "num_classes": model.num_classes,
        "class_names": model.class_names,
        "params": asdict(model.params),
        "normalizer": model.normalizer.to_dict(),
    }
    if isinstance(model, HybridModel):
        out["base_classifiers"] = [
            {"bag_seed": b.bag_seed, "router": b.router.to_dict(),
             "partition_trees": [None if t is None else tree_to_dict(t) for t in b.partition_trees]}
            for b in model.base_classifiers
        ]
    else:
        out["seeds"] = model.seeds
        out["trees"] = [tree_to_dict(t) for t in model.trees]
    return out


def model_from_dict(d: dict) -> ForestModel | HybridModel:
    if d.get("format") != FORMAT:
        raise ValueError("not a serialized obraf model")
    if d.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {d.get('version')}")
    params = EnsembleParams(**d["params"])
    normalizer = NormalizationParams.from_dict(d["normalizer"])
    if d["kind"] == "obrafl":
        bases = [
            HybridBaseClassifier(RvflModel.from_dict(b["router"]),
                                 [None if t is None else tree_from_dict(t) for t in b["partition_trees"]],
                                 int(b["bag_seed"]))
            for b in d["base_classifiers"]
        ]
        return HybridModel(bases, normalizer, params, d["num_classes"], d.get("class_names"))
    return ForestModel(d["kind"], [tree_from_dict(t) for t in d["trees"]], normalizer,
                       [int(s) for s in d["seeds"]], params, d["num_classes"], d.get("class_names"))


def dumps_model(model) -> str:
    return json.dumps(model_to_dict(model), separators=(",", ":"))


def save_model(model, path) -> Path:
    """Write the model as JSON (gzip-compressed when the name ends in ``.gz``)."""
    path = Path(path)
    text = dumps_model(model)
    if path.suffix == ".gz":
        # empty name and mtime=0 keep the bytes reproducible
        with open(path, "wb") as fh, gzip.GzipFile(filename="", fileobj=fh, mode="wb", mtime=0) as gz:
            gz.write(text.encode())
    else:
        path.write_text(text)
    return path


def load_model(path) -> ForestModel | HybridModel:
    path = Path(path)
    raw = gzip.decompress(path.read_bytes()) if path.suffix == ".gz" else path.read_bytes()
    return model_from_dict(json.loads(raw))
