"""Random forest of CART trees (Gini splits) written from scratch.

Tree growth runs in numba-compiled code. Splits are ``x <= t`` where ``t`` is an
actual training value (the largest value sent left), so predictions only depend
on the ordering of each feature: any strictly increasing transform applied to
a feature in both train and test data leaves predictions unchanged.

Per-tree randomness (bootstrap draw and per-node feature subsets) comes from
seeds spawned off the master seed, so results do not depend on how many
threads grow the trees.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from numba import njit


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_depth: Optional[int] = None
    min_samples_leaf: int = 1
    max_features: Optional[int] = None  # None -> floor(sqrt(d))
    bootstrap: bool = True
    seed: int = 0

    def features_per_split(self, n_features: int) -> int:
        k = self.max_features if self.max_features is not None else max(1, math.isqrt(n_features))
        if not 1 <= k <= n_features:
            raise ValueError(f"features per split must be in [1, {n_features}], got {k}")
        return k

    def validate(self) -> None:
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")


@njit(cache=True)
def _next_random(state):
    # splitmix64
    state[0] += np.uint64(0x9E3779B97F4A7C15)
    z = state[0]
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(cache=True, nogil=True)
def _grow_tree(X, y, sample, max_depth, min_leaf, mtry, seed):
    n = sample.shape[0]
    n_features = X.shape[1]
    # gathered copy of the (bootstrap) sample, one row per draw
    xs = np.empty((n_features, n), dtype=np.float64)
    ys = np.empty(n, dtype=np.int64)
    for i in range(n):
        ys[i] = y[sample[i]]
        for f in range(n_features):
            xs[f, i] = X[sample[i], f]
    # presorted positions per feature; every node owns the same [start, end)
    # range in each row, kept sorted by stable partitioning
    order = np.empty((n_features, n), dtype=np.int64)
    for f in range(n_features):
        order[f] = np.argsort(xs[f], kind="mergesort")
    goes_left = np.zeros(n, dtype=np.bool_)
    scratch = np.empty(n, dtype=np.int64)

    capacity = 2 * n + 1
    feature = np.full(capacity, -1, dtype=np.int64)
    threshold = np.zeros(capacity, dtype=np.float64)
    left = np.full(capacity, -1, dtype=np.int64)
    right = np.full(capacity, -1, dtype=np.int64)
    value = np.zeros(capacity, dtype=np.int64)

    state = np.empty(1, dtype=np.uint64)
    state[0] = np.uint64(seed)
    features = np.arange(n_features)

    # stack of (node, start, end, depth)
    stack = np.empty((capacity, 4), dtype=np.int64)
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = n
    stack[0, 3] = 0
    top = 1
    n_nodes = 1
    while top > 0:
        top -= 1
        node = stack[top, 0]
        start = stack[top, 1]
        end = stack[top, 2]
        depth = stack[top, 3]
        size = end - start
        pos = 0
        for i in range(start, end):
            pos += ys[order[0, i]]
        value[node] = 1 if 2 * pos > size else 0
        if pos == 0 or pos == size or size < 2 * min_leaf or (max_depth >= 0 and depth >= max_depth):
            continue

        best_score = np.inf
        best_feature = -1
        best_threshold = 0.0
        tried = 0
        # partial Fisher-Yates over the features; constant features do not count
        for j in range(n_features):
            if tried >= mtry:
                break
            r = j + np.int64(_next_random(state) % np.uint64(n_features - j))
            tmp = features[j]
            features[j] = features[r]
            features[r] = tmp
            f = features[j]
            row = order[f]
            vals = xs[f]
            if vals[row[start]] == vals[row[end - 1]]:
                continue
            tried += 1
            left_pos = 0
            for i in range(start, end - 1):
                left_pos += ys[row[i]]
                n_left = i - start + 1
                if n_left < min_leaf:
                    continue
                n_right = size - n_left
                if n_right < min_leaf:
                    break
                a = vals[row[i]]
                if a == vals[row[i + 1]]:
                    continue
                right_pos = pos - left_pos
                # weighted Gini: sum over children of 2 p (1 - p) n
                score = 2.0 * left_pos * (n_left - left_pos) / n_left + 2.0 * right_pos * (n_right - right_pos) / n_right
                if score < best_score:
                    best_score = score
                    best_feature = f
                    best_threshold = a
        if best_feature < 0:
            continue

        vals = xs[best_feature]
        n_left_total = 0
        for i in range(start, end):
            s = order[0, i]
            goes_left[s] = vals[s] <= best_threshold
            if goes_left[s]:
                n_left_total += 1
        mid = start + n_left_total
        for f in range(n_features):
            row = order[f]
            lo = start
            hi = 0
            for i in range(start, end):
                s = row[i]
                if goes_left[s]:
                    row[lo] = s
                    lo += 1
                else:
                    scratch[hi] = s
                    hi += 1
            for i in range(hi):
                row[mid + i] = scratch[i]

        feature[node] = best_feature
        threshold[node] = best_threshold
        left[node] = n_nodes
        right[node] = n_nodes + 1
        n_nodes += 2
        # right pushed first so the left subtree is numbered depth-first next
        stack[top, 0] = right[node]
        stack[top, 1] = mid
        stack[top, 2] = end
        stack[top, 3] = depth + 1
        top += 1
        stack[top, 0] = left[node]
        stack[top, 1] = start
        stack[top, 2] = mid
        stack[top, 3] = depth + 1
        top += 1
    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        value[:n_nodes].copy(),
    )


@njit(cache=True, nogil=True)
def _tree_predict(X, feature, threshold, left, right, value, out):
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]


@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=np.int64)
        for node in range(self.n_nodes):
            if self.feature[node] >= 0:
                depths[self.left[node]] = depths[self.right[node]] = depths[node] + 1
        return int(depths.max())

    def predict(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(len(X), dtype=np.int64)
        _tree_predict(np.ascontiguousarray(X, dtype=np.float64), self.feature, self.threshold, self.left, self.right, self.value, out)
        return out

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            np.asarray(d["feature"], dtype=np.int64),
            np.asarray(d["threshold"], dtype=np.float64),
            np.asarray(d["left"], dtype=np.int64),
            np.asarray(d["right"], dtype=np.int64),
            np.asarray(d["value"], dtype=np.int64),
        )


class RandomForest:
    def __init__(self, params: ForestParams | None = None):
        self.params = params or ForestParams()
        self.trees: list[Tree] = []
        self.n_features: int | None = None
        self.feature_names: list[str] | None = None

    def fit(self, X, y, workers: int = 1, feature_names: list[str] | None = None) -> "RandomForest":
        p = self.params
        p.validate()
        X = np.ascontiguousarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        if X.ndim != 2 or len(X) != len(y):
            raise ValueError("X must be 2-D with one row per label")
        if len(np.unique(y)) < 2:
            raise ValueError("training data must contain both classes")
        if not set(np.unique(y)) <= {0, 1}:
            raise ValueError("labels must be 0/1")
        n, d = X.shape
        mtry = p.features_per_split(d)
        max_depth = -1 if p.max_depth is None else p.max_depth
        children = np.random.SeedSequence(p.seed).spawn(p.n_trees)

        def grow(seq: np.random.SeedSequence) -> Tree:
            rng = np.random.default_rng(seq)
            sample = rng.integers(0, n, size=n) if p.bootstrap else np.arange(n)
            node_seed = int(rng.integers(0, 2**63))
            return Tree(*_grow_tree(X, y, sample.astype(np.int64), max_depth, p.min_samples_leaf, mtry, node_seed))

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                self.trees = list(pool.map(grow, children))
        else:
            self.trees = [grow(c) for c in children]
        self.n_features = d
        self.feature_names = list(feature_names) if feature_names is not None else None
        return self

    def votes(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        total = np.zeros(len(X), dtype=np.int64)
        for tree in self.trees:
            total += tree.predict(X)
        return total

    def predict(self, X) -> np.ndarray:
        # majority vote; a tie goes to class 0
        return (2 * self.votes(X) > len(self.trees)).astype(np.int64)

    def to_dict(self) -> dict:
        return {
            "kind": "random_forest",
            "params": asdict(self.params),
            "n_features": self.n_features,
            "feature_names": self.feature_names,
            "trees": [t.to_dict() for t in self.trees],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "RandomForest":
        model = cls(ForestParams(**d["params"]))
        model.n_features = d["n_features"]
        model.feature_names = d.get("feature_names")
        model.trees = [Tree.from_dict(t) for t in d["trees"]]
        return model


def train_random_forest(X, y, params: ForestParams | None = None, workers: int = 1, feature_names=None) -> RandomForest:
    return RandomForest(params).fit(X, y, workers=workers, feature_names=feature_names)
