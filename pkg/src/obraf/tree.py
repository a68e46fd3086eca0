"""Decision trees whose internal nodes split on hyperplanes.

Oblique nodes fit one multisurface proximal SVM per candidate class (that
class against the rest of the node), turn each pair of proximal planes into
its two angle bisectors and keep the bisector with the largest Gini gain.
Axis-parallel nodes scan every midpoint threshold of a random feature subset.
Both kinds route a sample right when ``w . x[subset] + b >= 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .numerics import NumericError, gen_eig_smallest_batch, regularize

GAIN_EPS = 1e-12
DEGENERATE_NORM = 1e-10
# relative Tikhonov term on the numerator Gram of each proximal-plane problem
PROXIMAL_REG = 1e-2
# score ties closer than this are re-ranked with the exact gain formula
_SCORE_RTOL = 1e-9


class NoSplitError(Exception):
    """No admissible split exists for the node."""


@dataclass(frozen=True)
class HyperplaneSplit:
    feature_subset: np.ndarray
    weights: np.ndarray
    bias: float
    kind: str = "oblique"  # or "axis_parallel"

    @classmethod
    def axis(cls, feature: int, threshold: float) -> HyperplaneSplit:
        return cls(np.array([feature], dtype=np.intp), np.array([1.0]), -float(threshold), "axis_parallel")

    @property
    def threshold(self) -> float:
        return -self.bias / self.weights[0]

    def decision(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return project(X[..., self.feature_subset], self.weights[None], np.array([self.bias]))[..., 0]

    def goes_right(self, X: np.ndarray) -> np.ndarray:
        return self.decision(X) >= 0


@dataclass(eq=False)
class TreeNode:
    counts: np.ndarray  # per-class training counts reaching this node
    split: HyperplaneSplit | None = None
    left: TreeNode | None = None
    right: TreeNode | None = None
    gain: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.split is None

    @property
    def leaf_distribution(self) -> np.ndarray:
        return self.counts


@dataclass(frozen=True)
class SplitCandidate:
    split: HyperplaneSplit
    gini_gain: float
    target_class: int | None
    left_counts: np.ndarray
    right_counts: np.ndarray
    candidate_features: np.ndarray
    # (target_class, bisector, gain) of every admissible candidate evaluated
    pool: tuple = field(default=(), repr=False)


@dataclass(frozen=True)
class TreeParams:
    q: int
    max_depth: int | None = None
    top_fraction: float = 0.5
    split_kind: str = "oblique"  # or "axis_parallel"
    top_min_classes: int = 4  # top_fraction only kicks in above this many classes
    proximal_reg: float = PROXIMAL_REG
    # one-vs-rest problems with fewer samples than this on either side are
    # rank deficient and skipped; None means q + 1
    min_side: int | None = None
    second_plane: bool = True  # off: split on the class's own proximal plane

    def __post_init__(self):
        if self.q < 1:
            raise ValueError("q must be at least 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be non-negative")
        if not 0 < self.top_fraction <= 1:
            raise ValueError("top_fraction must lie in (0, 1]")
        if self.split_kind not in ("oblique", "axis_parallel"):
            raise ValueError(f"unknown split kind {self.split_kind!r}")


def project(Xs: np.ndarray, W: np.ndarray, B: np.ndarray) -> np.ndarray:
    """``Xs @ W.T + B`` accumulated feature by feature.

    A fixed summation order makes every row's value independent of how many
    rows or hyperplanes are evaluated together, so split search and routing
    always agree on which side a sample falls.
    """
    out = np.multiply.outer(Xs[..., 0], W[:, 0])
    for j in range(1, W.shape[1]):
        out += np.multiply.outer(Xs[..., j], W[:, j])
    return out + B


# ---------------------------------------------------------------- impurity


def gini_impurity(class_counts) -> float:
    c = np.asarray(class_counts, dtype=float)
    total = c.sum()
    if total <= 0:
        raise ValueError("gini impurity of an empty node")
    p = c / total
    return float(1.0 - np.dot(p, p))


def gini_gain(parent_counts, left_counts, right_counts) -> float:
    """Parent impurity minus the size-weighted impurity of the two children.

    Integer counts are evaluated in rational arithmetic and rounded once, so
    equal gains always compare equal.
    """
    parent = np.asarray(parent_counts)
    left = np.asarray(left_counts)
    right = np.asarray(right_counts)
    if not np.array_equal(left + right, parent):
        raise ValueError("left + right counts must equal the parent counts")
    nl, nr = left.sum(), right.sum()
    if nl <= 0 or nr <= 0:
        raise ValueError("both children must be non-empty")
    if all(np.all(a == np.round(a)) for a in (left, right)):
        # gain = (sum(l^2)/nl + sum(r^2)/nr - sum(p^2)/n) / n
        l = [int(v) for v in left]
        r = [int(v) for v in right]
        n = int(nl) + int(nr)
        frac = _exact_score(l, r) - Fraction(sum((a + b) ** 2 for a, b in zip(l, r)), n)
        return float(frac / n)
    n = nl + nr
    child = (nl / n) * gini_impurity(left) + (nr / n) * gini_impurity(right)
    return gini_impurity(parent) - child


def _purity_scores(left: np.ndarray, right: np.ndarray) -> np.ndarray:
    """``sum(l^2)/n_l + sum(r^2)/n_r`` per column; monotone in Gini gain.

    Columns with an empty side score -inf.
    """
    nl = left.sum(axis=0)
    nr = right.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = (left * left).sum(axis=0) / nl + (right * right).sum(axis=0) / nr
    return np.where((nl > 0) & (nr > 0), s, -np.inf)


def _exact_score(left, right) -> Fraction:
    """The purity score in rational arithmetic, for exact tie detection."""
    left = [int(v) for v in left]
    right = [int(v) for v in right]
    return (Fraction(sum(v * v for v in left), sum(left))
            + Fraction(sum(v * v for v in right), sum(right)))


def _near_best(scores: np.ndarray) -> np.ndarray:
    top = scores.max()
    return np.flatnonzero(scores >= top - _SCORE_RTOL * abs(top))


# ---------------------------------------------------------------- MPSVM


def _augment(X: np.ndarray) -> np.ndarray:
    return np.hstack([X, -np.ones((X.shape[0], 1))])


def _regularize_weights(G: np.ndarray, reg: float) -> np.ndarray:
    """Add ``reg * mean(diag)`` to the weight block of each Gram, leaving the
    offset coordinate alone so the penalty does not depend on where the
    node's samples sit."""
    q = G.shape[-1] - 1
    idx = np.arange(q)
    scale = np.trace(G[..., :q, :q], axis1=-2, axis2=-1) / q
    out = G.copy()
    out[..., idx, idx] += (reg * np.maximum(scale, np.finfo(float).tiny))[..., None]
    return out


def _planes_from_grams(GA: np.ndarray, GB: np.ndarray, reg: float | None = None):
    """Proximal planes for stacks of class Gram matrices ``[X -e]'[X -e]``.

    Returns ``(w1, b1, w2, b2)``: plane 1 is closest to class A relative to
    B, plane 2 the reverse. Planes are ``w . x + b = 0``.
    """
    reg = PROXIMAL_REG if reg is None else reg
    num = np.concatenate([GA, GB])
    if reg > 0:
        num = _regularize_weights(num, reg)
    _, z = gen_eig_smallest_batch(num, np.concatenate([GB, GA]))
    k = GA.shape[0]
    w, b = z[:, :-1], -z[:, -1]
    return w[:k], b[:k], w[k:], b[k:]


def mpsvm_hyperplane(samples_A, samples_B, reg: float = 0.0):
    """Two proximal planes ``(w, b)`` for point sets A and B.

    The first minimizes ``||A w - e g||^2 / ||B w - e g||^2`` over ``z = (w, g)``,
    the second swaps the roles; each is returned as ``w . x + b = 0`` with
    ``b = -g``. ``reg > 0`` adds a relative Tikhonov term to the numerator,
    which picks the plane farthest from the other set when the first set
    alone does not pin one down (tree nodes use ``PROXIMAL_REG``).
    """
    A = _augment(np.atleast_2d(np.asarray(samples_A, dtype=float)))
    B = _augment(np.atleast_2d(np.asarray(samples_B, dtype=float)))
    if A.shape[0] == 0 or B.shape[0] == 0:
        raise ValueError("both classes must be non-empty")
    w1, b1, w2, b2 = _planes_from_grams((A.T @ A)[None], (B.T @ B)[None], reg)
    return (w1[0], float(b1[0])), (w2[0], float(b2[0]))


def _unit_planes(w, b):
    norm = np.linalg.norm(w, axis=-1)
    ok = norm > DEGENERATE_NORM
    safe = np.where(ok, norm, 1.0)
    return w / safe[..., None], b / safe, ok


def bisector_splits(plane1, plane2, feature_subset=None) -> list[HyperplaneSplit]:
    """Angle bisectors of two planes, difference bisector first.

    Planes are ``(w, b)`` pairs. A bisector whose normal vanishes (the planes
    are parallel) is dropped; :class:`NoSplitError` if none survive.
    """
    (w1, b1), (w2, b2) = plane1, plane2
    w1, b1, ok1 = _unit_planes(np.asarray(w1, dtype=float), np.float64(b1))
    w2, b2, ok2 = _unit_planes(np.asarray(w2, dtype=float), np.float64(b2))
    if not (ok1 and ok2):
        raise NoSplitError("a proximal plane has a vanishing normal")
    subset = np.arange(len(w1)) if feature_subset is None else np.asarray(feature_subset)
    out = []
    for w, b in ((w1 - w2, b1 - b2), (w1 + w2, b1 + b2)):
        if np.linalg.norm(w) >= DEGENERATE_NORM:
            out.append(HyperplaneSplit(subset, w, float(b), "oblique"))
    if not out:
        raise NoSplitError("both bisectors are degenerate")
    return out


# ---------------------------------------------------------------- split search


def _node_classes(y):
    classes, local, counts = np.unique(y, return_inverse=True, return_counts=True)
    return classes, local, counts


def _full_counts(local_counts, classes, num_classes):
    out = np.zeros(num_classes, dtype=np.int64)
    out[classes] = local_counts
    return out


def _draw_features(d: int, q: int, rng: np.random.Generator) -> np.ndarray:
    return rng.choice(d, size=min(q, d), replace=False)


def best_axis_split(X, y, num_classes: int, q: int, rng: np.random.Generator | None = None,
                    features=None) -> SplitCandidate:
    """Best single-feature threshold over ``q`` random features.

    Every midpoint between consecutive distinct values is a candidate. Ties
    in gain go to the lower feature index, then the lower threshold.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    feats = _draw_features(X.shape[1], q, rng) if features is None else np.asarray(features)
    classes, local, counts = _node_classes(y)
    K, n = len(classes), len(y)
    onehot = np.zeros((n, K), dtype=np.int64)
    onehot[np.arange(n), local] = 1

    best = None  # (gain, -feature, -threshold, left, right)
    for f in np.sort(feats):
        v = X[:, f]
        order = np.argsort(v, kind="stable")
        vs = v[order]
        cut = np.flatnonzero(vs[1:] > vs[:-1])
        if len(cut) == 0:
            continue
        left = np.cumsum(onehot[order], axis=0)[cut].T  # K x m
        right = counts[:, None] - left
        scores = _purity_scores(left, right)
        for i in _near_best(scores):
            if best is not None and scores[i] < best[0][0] * (1 - _SCORE_RTOL):
                continue
            lo, hi = vs[cut[i]], vs[cut[i] + 1]
            thr = 0.5 * (lo + hi)
            if not lo < thr <= hi:
                thr = hi
            key = (scores[i], _exact_score(left[:, i], right[:, i]), -int(f), -thr)
            if best is None or key[1:] > best[0][1:]:
                best = (key, int(f), thr, left[:, i], right[:, i])
    if best is None:
        raise NoSplitError("all selected features are constant at this node")
    _, f, thr, left, right = best
    g = gini_gain(counts, left, right)
    return SplitCandidate(
        HyperplaneSplit.axis(f, thr), g, None,
        _full_counts(left, classes, num_classes), _full_counts(right, classes, num_classes),
        np.asarray(feats), pool=(),
    )


def candidate_classes(counts: np.ndarray, top_fraction: float, top_min_classes: int = 4) -> np.ndarray:
    """Local indices of the classes that get a one-vs-rest problem.

    With more than ``top_min_classes`` classes present only the
    ``ceil(top_fraction * K)`` most frequent are kept (ties to lower index).
    """
    K = len(counts)
    order = np.lexsort((np.arange(K), -counts))
    if K > top_min_classes:
        return order[: math.ceil(top_fraction * K)]
    return order


_BISECTOR_NAMES = ("difference", "sum", "plane")


def best_oblique_split(X, y, num_classes: int, q: int, top_fraction: float = 0.5,
                       rng: np.random.Generator | None = None, features=None,
                       top_min_classes: int = 4, min_side: int = 1,
                       proximal_reg: float = PROXIMAL_REG, second_plane: bool = True) -> SplitCandidate:
    """Best MPSVM bisector over the one-vs-rest problems of a node.

    One random subset of ``q`` features is drawn for the node. Ties in gain
    are broken by larger target-class count, then lower class id, then the
    difference bisector before the sum bisector. With ``second_plane`` off
    the class's own proximal plane is the only candidate per class.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    classes, local, counts = _node_classes(y)
    if len(classes) < 2:
        raise ValueError("oblique split needs at least two classes at the node")
    feats = _draw_features(X.shape[1], q, rng) if features is None else np.asarray(features)
    Xs = X[:, feats]
    Z = _augment(Xs)
    total = Z.T @ Z
    cand = candidate_classes(counts, top_fraction, top_min_classes)
    cand = cand[(counts[cand] >= min_side) & (len(y) - counts[cand] >= min_side)]
    if len(cand) == 0:
        raise NoSplitError("every one-vs-rest problem is rank deficient")
    GA = np.stack([Z[local == c].T @ Z[local == c] for c in cand])
    GB = total[None] - GA

    try:
        w1, b1, w2, b2 = _planes_from_grams(GA, GB, proximal_reg)
    except NumericError as exc:
        raise NoSplitError(str(exc)) from exc
    w1, b1, ok1 = _unit_planes(w1, b1)
    w2, b2, ok2 = _unit_planes(w2, b2)
    if second_plane:
        W = np.concatenate([w1 - w2, w1 + w2])  # 2m x q, difference bisectors first
        B = np.concatenate([b1 - b2, b1 + b2])
        owner = np.concatenate([cand, cand])
        kind = np.repeat([0, 1], len(cand))  # 0 = difference, 1 = sum
        valid = np.concatenate([ok1 & ok2] * 2) & (np.linalg.norm(W, axis=1) >= DEGENERATE_NORM)
    else:
        W, B, owner, valid = w1, b1, cand, ok1
        kind = np.full(len(cand), 2)
    if not valid.any():
        raise NoSplitError("every bisector is degenerate")
    W, B, owner, kind = W[valid], B[valid], owner[valid], kind[valid]

    goes_right = project(Xs, W, B) >= 0  # n x M
    onehot = np.zeros((len(classes), len(y)))
    onehot[local, np.arange(len(y))] = 1.0
    right = np.rint(onehot @ goes_right).astype(np.int64)  # K x M
    left = counts[:, None] - right
    scores = _purity_scores(left, right)
    admissible = np.flatnonzero(np.isfinite(scores))
    if len(admissible) == 0:
        raise NoSplitError("every bisector leaves a child empty")

    gains = {int(i): gini_gain(counts, left[:, i], right[:, i]) for i in admissible}
    near = _near_best(scores[admissible])
    best = max(admissible[near], key=lambda i: (_exact_score(left[:, i], right[:, i]), counts[owner[i]],
                                                -owner[i], -kind[i]))
    best = int(best)
    pool = tuple((int(classes[owner[i]]), _BISECTOR_NAMES[kind[i]], g) for i, g in gains.items())
    split = HyperplaneSplit(np.asarray(feats, dtype=np.intp), W[best].copy(), float(B[best]), "oblique")
    return SplitCandidate(
        split, gains[best], int(classes[owner[best]]),
        _full_counts(left[:, best], classes, num_classes),
        _full_counts(right[:, best], classes, num_classes),
        np.asarray(feats), pool,
    )


# ---------------------------------------------------------------- growth


def _find_split(X, y, num_classes, params: TreeParams, rng) -> SplitCandidate | None:
    if params.split_kind == "oblique":
        try:
            cand = best_oblique_split(X, y, num_classes, params.q, params.top_fraction, rng,
                                      top_min_classes=params.top_min_classes,
                                      min_side=params.q + 1 if params.min_side is None else params.min_side,
                                      proximal_reg=params.proximal_reg,
                                      second_plane=params.second_plane)
            if cand.gini_gain > GAIN_EPS:
                return cand
        except NoSplitError:
            pass
    try:
        cand = best_axis_split(X, y, num_classes, params.q, rng)
    except NoSplitError:
        return None
    return cand if cand.gini_gain > GAIN_EPS else None


def grow_tree(X, y, num_classes: int, params: TreeParams, rng: np.random.Generator) -> TreeNode:
    """Grow a tree depth-first (left subtree before right).

    A node becomes a leaf when it is pure, holds fewer than two samples, sits
    at ``max_depth``, or no split with positive gain is found. Oblique trees
    fall back to an axis-parallel split when the oblique search fails.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.intp)
    if len(y) == 0:
        raise ValueError("cannot grow a tree on zero samples")
    root = TreeNode(np.bincount(y, minlength=num_classes))
    stack = [(root, np.arange(len(y)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        if (np.count_nonzero(node.counts) < 2 or len(idx) < 2
                or (params.max_depth is not None and depth >= params.max_depth)):
            continue
        cand = _find_split(X[idx], y[idx], num_classes, params, rng)
        if cand is None:
            continue
        right = cand.split.goes_right(X[idx])
        node.split, node.gain = cand.split, cand.gini_gain
        node.left = TreeNode(cand.left_counts)
        node.right = TreeNode(cand.right_counts)
        stack.append((node.right, idx[right], depth + 1))
        stack.append((node.left, idx[~right], depth + 1))
    return root


def iter_nodes(tree: TreeNode):
    """Pre-order traversal yielding ``(node, depth)``."""
    stack = [(tree, 0)]
    while stack:
        node, depth = stack.pop()
        yield node, depth
        if not node.is_leaf:
            stack.append((node.right, depth + 1))
            stack.append((node.left, depth + 1))


def count_nodes(tree: TreeNode) -> int:
    return sum(1 for _ in iter_nodes(tree))


def tree_depth(tree: TreeNode) -> int:
    return max(depth for _, depth in iter_nodes(tree))


def predict_tree(tree: TreeNode, X) -> np.ndarray:
    """Class-probability rows: the normalized counts of the leaf each row reaches."""
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    out = np.empty((X.shape[0], len(tree.counts)))
    stack = [(tree, np.arange(X.shape[0]))]
    while stack:
        node, idx = stack.pop()
        if len(idx) == 0:
            continue
        if node.is_leaf:
            out[idx] = node.counts / node.counts.sum()
            continue
        right = node.split.goes_right(X[idx])
        stack.append((node.right, idx[right]))
        stack.append((node.left, idx[~right]))
    return out[0] if single else out


# ---------------------------------------------------------------- serialization


def tree_to_dict(tree: TreeNode) -> dict:
    """Flatten to pre-order lists; internal nodes carry their split."""
    nodes = []
    for node, _ in iter_nodes(tree):
        entry = {"counts": node.counts.tolist()}
        if not node.is_leaf:
            s = node.split
            entry.update(features=s.feature_subset.tolist(), weights=s.weights.tolist(),
                         bias=s.bias, kind=s.kind, gain=node.gain)
        nodes.append(entry)
    return {"nodes": nodes}


def tree_from_dict(d: dict) -> TreeNode:
    entries = iter(d["nodes"])
    root = _node_from(next(entries))
    pending = [] if root.is_leaf else [(root, "right"), (root, "left")]
    while pending:
        parent, side = pending.pop()
        child = _node_from(next(entries))
        setattr(parent, side, child)
        if not child.is_leaf:
            pending += [(child, "right"), (child, "left")]
    return root


def _node_from(e: dict) -> TreeNode:
    node = TreeNode(np.asarray(e["counts"], dtype=np.int64))
    if "weights" in e:
        node.split = HyperplaneSplit(np.asarray(e["features"], dtype=np.intp),
                                     np.asarray(e["weights"], dtype=float), float(e["bias"]), e["kind"])
        node.gain = float(e["gain"])
    return node
