"""CART regression trees and a bagged forest of them.

Trees are stored as flat node arrays (feature, threshold, left, right, value)
with ``feature == -1`` marking a leaf, so prediction is a vectorized walk and
serialization is a handful of array blocks. Splitting and prediction compare
in float32 so thresholds survive a float32 round trip unchanged.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DimensionMismatch

LEAF = -1


@dataclass(frozen=True)
class ForestConfig:
    tree_count: int = 100
    max_depth: int | None = None
    min_samples_leaf: int = 1
    features_per_split: int | None = None  # None: all features
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.tree_count < 1:
            raise ValueError("tree_count must be >= 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")

    def to_dict(self) -> dict:
        return {
            "tree_count": self.tree_count,
            "max_depth": self.max_depth,
            "min_samples_leaf": self.min_samples_leaf,
            "features_per_split": self.features_per_split,
            "bootstrap": self.bootstrap,
            "seed": self.seed,
        }


class Tree:
    def __init__(self, feature, threshold, left, right, value):
        self.feature = np.asarray(feature, dtype=np.int32)
        self.threshold = np.asarray(threshold, dtype=np.float32)
        self.left = np.asarray(left, dtype=np.int32)
        self.right = np.asarray(right, dtype=np.int32)
        self.value = np.asarray(value, dtype=np.float32)

    @property
    def node_count(self) -> int:
        return len(self.feature)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float32)
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        active = self.feature[node] != LEAF
        while active.any():
            idx = rows[active]
            nd = node[idx]
            go_left = X[idx, self.feature[nd]] <= self.threshold[nd]
            node[idx] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] != LEAF
        return self.value[node].astype(np.float64)


def _best_split(Xn: np.ndarray, yn: np.ndarray, features: np.ndarray, min_leaf: int):
    """Best (gain, feature, threshold) over ``features`` by squared-error reduction, or None."""
    m = len(yn)
    sub = Xn[:, features]
    order = np.argsort(sub, axis=0, kind="stable")
    xs = np.take_along_axis(sub, order, axis=0)
    ys = yn[order]
    csum = np.cumsum(ys, axis=0)
    total = csum[-1]
    n_left = np.arange(1, m, dtype=np.float64)[:, None]
    left_sum = csum[:-1]
    right_sum = total - left_sum
    # proxy for SSE reduction: sum_l^2/n_l + sum_r^2/n_r (constant terms dropped)
    score = left_sum**2 / n_left + right_sum**2 / (m - n_left)
    valid = xs[:-1] < xs[1:]
    if min_leaf > 1:
        pos = np.arange(1, m)[:, None]
        valid &= (pos >= min_leaf) & (m - pos >= min_leaf)
    if not valid.any():
        return None
    score = np.where(valid, score, -np.inf)
    flat = int(np.argmax(score))
    i, j = divmod(flat, len(features))
    gain = score[i, j] - total[j] ** 2 / m
    if gain <= 0:
        return None
    lo, hi = xs[i, j], xs[i + 1, j]
    thr = np.float32((np.float64(lo) + np.float64(hi)) / 2)
    if not lo <= thr < hi:
        thr = lo
    return gain, int(features[j]), thr


def fit_tree(
    X: np.ndarray,
    y: np.ndarray,
    rng: np.random.Generator,
    max_depth: int | None = None,
    min_samples_leaf: int = 1,
    features_per_split: int | None = None,
) -> Tree:
    X = np.asarray(X, dtype=np.float32)
    y = np.asarray(y, dtype=np.float64)
    d = X.shape[1]
    k = d if features_per_split is None else max(1, min(features_per_split, d))
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(idx) -> int:
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        value.append(float(np.mean(y[idx])))
        return len(feature) - 1

    stack = [(new_node(np.arange(len(y))), np.arange(len(y)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        if len(idx) < 2 * min_samples_leaf or (max_depth is not None and depth >= max_depth):
            continue
        yn = y[idx]
        if np.all(yn == yn[0]):
            continue
        feats = np.arange(d) if k == d else np.sort(rng.choice(d, size=k, replace=False))
        found = _best_split(X[idx], yn, feats, min_samples_leaf)
        if found is None:
            continue
        _, f, thr = found
        mask = X[idx, f] <= thr
        li, ri = idx[mask], idx[~mask]
        feature[node] = f
        threshold[node] = float(thr)
        left[node] = new_node(li)
        right[node] = new_node(ri)
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))
    return Tree(feature, threshold, left, right, value)


class Forest:
    def __init__(self, trees: list[Tree], input_dim: int):
        self.trees = trees
        self.input_dim = input_dim

    @classmethod
    def fit(cls, X: np.ndarray, y: np.ndarray, cfg: ForestConfig = ForestConfig()) -> "Forest":
        X = np.atleast_2d(np.asarray(X, dtype=np.float32))
        y = np.asarray(y, dtype=np.float64)
        n = len(y)
        trees = []
        for child in np.random.SeedSequence(cfg.seed).spawn(cfg.tree_count):
            rng = np.random.default_rng(child)
            rows = rng.integers(0, n, size=n) if cfg.bootstrap else np.arange(n)
            trees.append(fit_tree(X[rows], y[rows], rng, cfg.max_depth, cfg.min_samples_leaf, cfg.features_per_split))
        return cls(trees, X.shape[1])

    def tree_predictions(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float32))
        if X.shape[1] != self.input_dim:
            raise DimensionMismatch(f"expected {self.input_dim} features, got {X.shape[1]}")
        return np.stack([t.predict(X) for t in self.trees])

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.tree_predictions(X).mean(axis=0)

    @property
    def node_count(self) -> int:
        return sum(t.node_count for t in self.trees)
