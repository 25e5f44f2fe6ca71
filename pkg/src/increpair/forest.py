"""Cost-sensitive random forests (MetaCost over bagged information-gain trees)."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .features import FeatureVector

FOREST_FORMAT = "increpair-forest"
FOREST_VERSION = 1


class ForestError(ValueError):
    pass


@dataclass(frozen=True)
class CostMatrix:
    """Misclassification costs; correct decisions cost nothing."""

    fn_cost: float = 1.0
    fp_cost: float = 1.0

    def __post_init__(self):
        if self.fn_cost < 0 or self.fp_cost < 0:
            raise ForestError("costs must be non-negative")

    def as_matrix(self) -> np.ndarray:
        """Rows are gold (positive, fluent), columns predictions (positive, fluent)."""
        return np.array([[0.0, self.fn_cost], [self.fp_cost, 0.0]])


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 20
    max_depth: int = 4
    metacost_iterations: int = 10
    resample_fraction: float = 0.25
    seed: int = 0
    min_samples_split: int = 2

    def __post_init__(self):
        if not 0.0 < self.resample_fraction <= 1.0:
            raise ForestError("resample_fraction must lie in (0, 1]")
        if self.n_trees < 1 or self.max_depth < 0 or self.metacost_iterations < 0:
            raise ForestError("n_trees >= 1, max_depth >= 0 and metacost_iterations >= 0 required")


@dataclass
class Tree:
    """Array-encoded binary tree; ``feature[k] == -1`` marks a leaf."""

    feature: list[int] = field(default_factory=list)
    threshold: list[float] = field(default_factory=list)
    left: list[int] = field(default_factory=list)
    right: list[int] = field(default_factory=list)
    value: list[float] = field(default_factory=list)

    def add(self, value: float) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(float(value))
        return len(self.feature) - 1

    def depth(self) -> int:
        def rec(k: int) -> int:
            if self.feature[k] < 0:
                return 0
            return 1 + max(rec(self.left[k]), rec(self.right[k]))
        return rec(0)

    def predict_value(self, x: np.ndarray) -> float:
        k = 0
        while self.feature[k] >= 0:
            k = self.left[k] if x[self.feature[k]] <= self.threshold[k] else self.right[k]
        return self.value[k]


def _grow_tree(X: np.ndarray, y: np.ndarray, idx: np.ndarray, rng: np.random.Generator,
               max_depth: int, n_sub: int, nlogn: np.ndarray, min_split: int) -> Tree:
    tree = Tree()
    d = X.shape[1]

    def grow(rows: np.ndarray, depth: int) -> int:
        pos = int(y[rows].sum())
        n = rows.shape[0]
        node = tree.add(pos / n if n else 0.0)
        if depth >= max_depth or n < min_split or pos == 0 or pos == n:
            return node
        feats = np.sort(rng.choice(d, size=n_sub, replace=False)).astype(np.int64)
        f, thr, imp = kernels.best_split(X, y, rows, feats, nlogn)
        parent = (nlogn[n] - nlogn[pos] - nlogn[n - pos])
        if f < 0 or not imp < parent:
            return node
        go_left = X[rows, f] <= thr
        tree.feature[node] = int(f)
        tree.threshold[node] = float(thr)
        tree.left[node] = grow(rows[go_left], depth + 1)
        tree.right[node] = grow(rows[~go_left], depth + 1)
        return node

    grow(idx, 0)
    return tree


def _bagged_trees(X, y, rows, params: ForestParams, seed_seq: np.random.SeedSequence) -> list[Tree]:
    d = X.shape[1]
    n_sub = max(1, math.ceil(math.sqrt(d)))
    nlogn = kernels.nlogn_table(max(len(rows), 1))
    trees = []
    for child in seed_seq.spawn(params.n_trees):
        rng = np.random.default_rng(child)
        boot = rows[rng.integers(0, len(rows), size=len(rows))]
        trees.append(_grow_tree(X, y, boot, rng, params.max_depth, n_sub, nlogn,
                                params.min_samples_split))
    return trees


class Forest:
    """A trained forest bound to a stage's feature manifest."""

    def __init__(self, trees: list[Tree], manifest: Sequence[str], stage: str = "",
                 cost: CostMatrix | None = None, params: ForestParams | None = None,
                 training_log: dict | None = None):
        self.trees = trees
        self.manifest = tuple(manifest)
        self.stage = stage
        self.cost = cost or CostMatrix()
        self.params = params or ForestParams()
        self.training_log = training_log or {}
        self._pack()

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def _pack(self) -> None:
        feat, thr, left, right, val, roots = [], [], [], [], [], []
        off = 0
        for t in self.trees:
            roots.append(off)
            feat += t.feature
            thr += t.threshold
            left += [k + off if k >= 0 else -1 for k in t.left]
            right += [k + off if k >= 0 else -1 for k in t.right]
            val += t.value
            off += len(t.feature)
        self._arrays = (np.asarray(feat, dtype=np.int64), np.asarray(thr, dtype=np.float64),
                        np.asarray(left, dtype=np.int64), np.asarray(right, dtype=np.int64),
                        np.asarray(val, dtype=np.float64), np.asarray(roots, dtype=np.int64))

    def votes(self, X: np.ndarray) -> np.ndarray:
        X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
        if X.shape[1] != len(self.manifest):
            raise ForestError(f"expected {len(self.manifest)} features, got {X.shape[1]}")
        return kernels.apply_forest(X, *self._arrays)

    def scores(self, X: np.ndarray) -> np.ndarray:
        return self.votes(X) / self.n_trees

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Positive iff strictly more than half of the trees vote positive."""
        return self.scores(X) > 0.5

    def classify(self, x: FeatureVector) -> tuple[bool, float]:
        if tuple(x.names) != self.manifest:
            raise ForestError(f"feature manifest mismatch for stage {self.stage!r}")
        score = float(self.votes(x.values[None, :])[0]) / self.n_trees
        return score > 0.5, score

    # -- persistence ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": FOREST_FORMAT,
            "version": FOREST_VERSION,
            "stage": self.stage,
            "manifest": list(self.manifest),
            "cost": asdict(self.cost),
            "params": asdict(self.params),
            "training_log": self.training_log,
            "trees": [asdict(t) for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict, expect_manifest: Sequence[str] | None = None) -> "Forest":
        if d.get("format") != FOREST_FORMAT or d.get("version") != FOREST_VERSION:
            raise ForestError("unsupported forest file (format or version)")
        if expect_manifest is not None and tuple(d["manifest"]) != tuple(expect_manifest):
            raise ForestError(f"feature manifest mismatch for stage {d.get('stage')!r}")
        trees = [Tree(**t) for t in d["trees"]]
        return cls(trees, d["manifest"], d["stage"], CostMatrix(**d["cost"]),
                   ForestParams(**d["params"]), d.get("training_log", {}))

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | Path, expect_manifest: Sequence[str] | None = None) -> "Forest":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh), expect_manifest)


def _constant_forest(label: bool, n_trees: int) -> list[Tree]:
    trees = []
    for _ in range(n_trees):
        t = Tree()
        t.add(1.0 if label else 0.0)
        trees.append(t)
    return trees


def train_forest(X: np.ndarray, y: np.ndarray, cost: CostMatrix | None = None,
                 params: ForestParams | None = None, manifest: Sequence[str] | None = None,
                 stage: str = "") -> Forest:
    """MetaCost training.

    Each of ``metacost_iterations`` forests is trained on a resample (with
    replacement) of ``resample_fraction`` of the data; their mean positive
    vote fraction estimates P(positive) for every training row.  Rows are
    relabelled to the class with the lower expected cost and the final forest
    is trained on the relabelled data.  With zero iterations the labels are
    used as given.
    """
    cost = cost or CostMatrix()
    params = params or ForestParams()
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y).astype(np.int8)
    if X.ndim != 2 or len(X) != len(y):
        raise ForestError("X must be 2-D with one row per label")
    if len(y) == 0:
        raise ForestError("cannot train on empty data")
    if not np.isin(y, (0, 1)).all():
        raise ForestError("labels must be binary")
    manifest = tuple(manifest) if manifest is not None else tuple(f"f{j}" for j in range(X.shape[1]))
    if len(manifest) != X.shape[1]:
        raise ForestError("manifest length does not match the number of columns")
    n = len(y)
    log: dict = {"n_rows": n, "n_positive": int(y.sum()), "metacost_iterations": 0,
                 "resample_sizes": [], "relabelled_positive": int(y.sum())}
    if y.min() == y.max():
        warnings.warn(f"stage {stage!r}: one-class training data, using a constant classifier",
                      RuntimeWarning)
        return Forest(_constant_forest(bool(y[0]), params.n_trees), manifest, stage, cost,
                      params, log)
    root = np.random.SeedSequence(params.seed)
    meta_seq, final_seq = root.spawn(2)
    rows_all = np.arange(n, dtype=np.int64)
    if params.metacost_iterations > 0:
        p_pos = np.zeros(n)
        m = max(1, math.ceil(params.resample_fraction * n))
        for it_seq in meta_seq.spawn(params.metacost_iterations):
            rs_seq, tree_seq = it_seq.spawn(2)
            sample = np.random.default_rng(rs_seq).integers(0, n, size=m).astype(np.int64)
            f = Forest(_bagged_trees(X, y, sample, params, tree_seq), manifest)
            p_pos += f.scores(X)
            log["resample_sizes"].append(m)
        p_pos /= params.metacost_iterations
        log["metacost_iterations"] = params.metacost_iterations
        y_final = (p_pos * cost.fn_cost > (1.0 - p_pos) * cost.fp_cost).astype(np.int8)
    else:
        y_final = y
    log["relabelled_positive"] = int(y_final.sum())
    trees = _bagged_trees(X, y_final, rows_all, params, final_seq)
    return Forest(trees, manifest, stage, cost, params, log)


def classify(f: Forest, x: FeatureVector) -> tuple[bool, float]:
    return f.classify(x)
