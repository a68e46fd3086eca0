"""Build the benchmark CSVs under data/ from the raw files bundled in the
``keel-ds`` wheel (``pip install --no-deps keel-ds``).

The KEEL copies differ from the UCI originals in a few ways that this script
undoes:

* segment (Statlog image) carries the constant ``region-pixel-count`` column;
  optdigits carries two all-zero pixels. Constant columns are dropped so the
  feature counts are 18 and 62.
* penbased and optdigits merge the UCI train and test files. A stratified,
  seeded subsample restores the UCI training-set sizes (7494 and 3823).
* the 10-class yeast set only ships as binary one-vs-rest relabelings. The
  class of every row is recovered by matching feature vectors across those
  relabelings and the result is checked against the published class counts.

Only the raw ``.dat`` files are read; ``keel_ds`` itself is never imported
(it pins an old numpy).
"""

from __future__ import annotations

import argparse
import csv
import importlib.util
from collections import Counter
from pathlib import Path

import numpy as np

YEAST_NAMES = ["MIT", "NUC", "CYT", "ME1", "ME2", "ME3", "EXC", "VAC", "POX", "ERL"]
YEAST_COUNTS = {"CYT": 463, "NUC": 429, "MIT": 244, "ME3": 163, "ME2": 51,
                "ME1": 44, "EXC": 35, "VAC": 30, "POX": 20, "ERL": 5}
YEAST_FEATURES = ["mcg", "gvh", "alm", "mit", "erl", "pox", "vac", "nuc"]


def keel_dir() -> Path:
    spec = importlib.util.find_spec("keel_ds")
    if spec is None or spec.origin is None:
        raise SystemExit("keel-ds is not installed: pip install --no-deps keel-ds")
    return Path(spec.origin).parent / "data"


def read_dat(path: Path) -> tuple[np.ndarray, list[str]]:
    rows = [line.split(",") for line in path.read_text().splitlines()
            if line.strip() and not line.startswith("@")]
    X = np.array([[float(v) for v in r[:-1]] for r in rows])
    y = [r[-1].strip() for r in rows]
    return X, y


def drop_constant(X: np.ndarray) -> np.ndarray:
    keep = X.max(axis=0) > X.min(axis=0)
    return X[:, keep]


def stratified_subsample(X, y, size, seed):
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    classes, counts = np.unique(y, return_counts=True)
    quota = np.floor(counts * size / len(y)).astype(int)
    # largest remainders take the leftover slots
    rem = counts * size / len(y) - quota
    for i in np.argsort(-rem, kind="stable")[: size - quota.sum()]:
        quota[i] += 1
    keep = []
    for c, k in zip(classes, quota):
        idx = np.flatnonzero(y == c)
        keep.extend(rng.choice(idx, size=k, replace=False))
    keep = np.sort(np.array(keep))
    return X[keep], y[keep]


def _key(row) -> tuple:
    return tuple(np.round(row, 4))


def rebuild_yeast(root: Path) -> tuple[np.ndarray, list[str]]:
    """Recover the 10-class yeast labels from KEEL's binary relabelings.

    KEEL numbers the classes 0..9 as in ``YEAST_NAMES``; each file lists the
    class ids of its positive and negative side in the file name.
    """
    imb = root / "imbalanced" / "raw"
    X, _ = read_dat(imb / "yeast1.dat")

    # per feature vector: multiset of candidate class ids still possible
    def sides(name):
        neg, pos = name.split("_vs_")
        return ({int(c) for c in neg.replace("yeast-", "").split("-")},
                {int(c) for c in pos.split("-")})

    one_vs_rest = {"yeast1": 1, "yeast3": 5, "yeast4": 4, "yeast5": 3, "yeast6": 6}
    subsets = ["yeast-2_vs_4", "yeast-2_vs_8", "yeast-1-2-8-9_vs_7",
               "yeast-0-3-5-9_vs_7-8", "yeast-0-5-6-7-9_vs_4",
               "yeast-1-4-5-8_vs_7", "yeast-0-2-5-6_vs_3-7-8-9",
               "yeast-0-2-5-7-9_vs_3-6-8"]

    # (feature key, frozenset of allowed classes) evidence per row, keyed by row
    allowed = [set(range(10)) for _ in range(len(X))]
    rows_by_key: dict[tuple, list[int]] = {}
    for i, row in enumerate(X):
        rows_by_key.setdefault(_key(row), []).append(i)

    for name, cls in one_vs_rest.items():
        Xf, yf = read_dat(imb / f"{name}.dat")
        pos = Counter(_key(r) for r, lab in zip(Xf, yf) if lab == "positive")
        for key, rows in rows_by_key.items():
            n_pos = pos.get(key, 0)
            # rows sharing a key are interchangeable; hand the class to open rows
            open_rows = [i for i in rows if cls in allowed[i] and len(allowed[i]) > 1]
            for j, i in enumerate(open_rows):
                if j < n_pos:
                    allowed[i] &= {cls}
                else:
                    allowed[i] -= {cls}

    for name in subsets:
        neg_ids, pos_ids = sides(name)
        Xf, yf = read_dat(imb / f"{name}.dat")
        members = Counter()
        positives = Counter()
        for r, lab in zip(Xf, yf):
            members[_key(r)] += 1
            positives[_key(r)] += lab == "positive"
        for key, rows in rows_by_key.items():
            open_rows = [i for i in rows if len(allowed[i]) > 1]
            if not open_rows:
                continue
            m, p = members.get(key, 0), positives.get(key, 0)
            if m == 0:
                for i in open_rows:
                    allowed[i] -= neg_ids | pos_ids
            elif m == len(rows) and p in (0, m):
                for i in open_rows:
                    allowed[i] &= pos_ids if p else neg_ids

    labels = []
    for i, a in enumerate(allowed):
        if len(a) != 1:
            raise SystemExit(f"yeast row {i}: ambiguous class set {sorted(a)}")
        labels.append(YEAST_NAMES[a.pop()])
    got = Counter(labels)
    if got != Counter(YEAST_COUNTS):
        raise SystemExit(f"yeast class counts {dict(got)} do not match UCI")
    return X, labels


def write_csv(path: Path, X, y, names=None):
    names = names or [f"x{j}" for j in range(X.shape[1])]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([*names, "class"])
        for row, lab in zip(X, y):
            w.writerow([repr(float(v)) if not float(v).is_integer() else int(v)
                        for v in row] + [lab])
    print(f"{path}: n={len(y)} d={X.shape[1]} C={len(set(y))}")


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", type=Path, default=Path(__file__).resolve().parents[1] / "data")
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    args.out.mkdir(parents=True, exist_ok=True)
    bal = keel_dir() / "balanced" / "raw"

    X, y = read_dat(bal / "segment.dat")
    write_csv(args.out / "statlog_image.csv", drop_constant(X), y)

    X, y = read_dat(bal / "penbased.dat")
    X, y = stratified_subsample(X, y, 7494, args.seed)
    write_csv(args.out / "pendigits.csv", X, y)

    X, y = read_dat(bal / "optdigits.dat")
    X, y = stratified_subsample(drop_constant(X), y, 3823, args.seed)
    write_csv(args.out / "optical.csv", X, y)

    X, y = read_dat(bal / "letter.dat")
    write_csv(args.out / "letter.csv", X, y)

    X, y = rebuild_yeast(keel_dir())
    write_csv(args.out / "yeast.csv", X, y, YEAST_FEATURES)


if __name__ == "__main__":
    main()
