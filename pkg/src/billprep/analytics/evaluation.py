"""Stratified k-fold evaluation, majority undersampling and metrics."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from billprep.analytics.forest import ForestParams, RandomForest
from billprep.analytics.logistic import LogisticParams, LogisticRegression

MODEL_KINDS = ("forest", "logistic", "majority")


@dataclass
class EvalMetrics:
    confusion: np.ndarray  # rows: true class, columns: predicted class
    n_folds: int = 1
    folds: list["EvalMetrics"] = field(default_factory=list)

    @property
    def accuracy(self) -> float:
        total = self.confusion.sum()
        return float(np.trace(self.confusion) / total) if total else 0.0

    def precision(self, cls: int) -> float:
        predicted = self.confusion[:, cls].sum()
        return float(self.confusion[cls, cls] / predicted) if predicted else 0.0

    def recall(self, cls: int) -> float:
        actual = self.confusion[cls, :].sum()
        return float(self.confusion[cls, cls] / actual) if actual else 0.0

    def f1(self, cls: int) -> float:
        p, r = self.precision(cls), self.recall(cls)
        return 2 * p * r / (p + r) if p + r else 0.0

    def to_dict(self) -> dict[str, Any]:
        d = {
            "accuracy": self.accuracy,
            "precision": [self.precision(0), self.precision(1)],
            "recall": [self.recall(0), self.recall(1)],
            "f1": [self.f1(0), self.f1(1)],
            "confusion": self.confusion.tolist(),
            "n_folds": self.n_folds,
        }
        if self.folds:
            d["folds"] = [f.to_dict() for f in self.folds]
        return d


def confusion_matrix(y_true, y_pred) -> np.ndarray:
    cm = np.zeros((2, 2), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true, dtype=np.int64), np.asarray(y_pred, dtype=np.int64)), 1)
    return cm


def evaluate_predictions(y_true, y_pred) -> EvalMetrics:
    return EvalMetrics(confusion_matrix(y_true, y_pred))


def stratified_folds(y, k: int, seed: int = 0, stratified: bool = True) -> list[np.ndarray]:
    """Test-index arrays of a (stratified) k-fold partition.

    Each class is shuffled and dealt round-robin into the folds, continuing the
    deal where the previous class stopped, so every fold holds floor or ceil of
    ``n_class / k`` members of each class and fold sizes differ by at most one.
    """
    y = np.asarray(y)
    if k < 2:
        raise ValueError("k must be >= 2")
    if len(y) < k:
        raise ValueError(f"cannot make {k} folds from {len(y)} samples")
    rng = np.random.default_rng(seed)
    assignment = np.empty(len(y), dtype=np.int64)
    if stratified:
        offset = 0
        for cls in np.unique(y):
            members = np.flatnonzero(y == cls)
            if len(members) < k:
                raise ValueError(f"class {cls} has {len(members)} members, fewer than k={k}")
            members = rng.permutation(members)
            assignment[members] = (offset + np.arange(len(members))) % k
            offset = (offset + len(members)) % k
    else:
        assignment[rng.permutation(len(y))] = np.arange(len(y)) % k
    return [np.flatnonzero(assignment == f) for f in range(k)]


def undersample_majority(X, y, ratio: float = 1.0, seed: int = 0):
    """Randomly drop majority-class rows until majority:minority <= ``ratio``.

    Minority rows are untouched and the original row order is kept.
    """
    X = np.asarray(X)
    y = np.asarray(y)
    classes, counts = np.unique(y, return_counts=True)
    if len(classes) < 2:
        raise ValueError("undersampling needs both classes present")
    if ratio < 1:
        raise ValueError("ratio must be >= 1 (majority:minority)")
    minority = classes[np.argmin(counts)]
    majority = classes[np.argmax(counts)]
    if minority == majority:  # exact balance
        return X, y
    keep_n = int(np.floor(ratio * counts.min()))
    major_idx = np.flatnonzero(y == majority)
    if len(major_idx) <= keep_n:
        return X, y
    rng = np.random.default_rng(seed)
    kept = rng.choice(major_idx, size=keep_n, replace=False)
    mask = y != majority
    mask[kept] = True
    return X[mask], y[mask]


class MajorityClassifier:
    """Always predicts the most frequent training class (ties -> 0)."""

    def fit(self, X, y) -> "MajorityClassifier":
        y = np.asarray(y)
        self.label = int(2 * y.sum() > len(y))
        return self

    def predict(self, X) -> np.ndarray:
        return np.full(len(X), self.label, dtype=np.int64)


def make_model(kind: str, params=None):
    if kind == "forest":
        return RandomForest(params if isinstance(params, ForestParams) else ForestParams(**(params or {})))
    if kind == "logistic":
        return LogisticRegression(params if isinstance(params, LogisticParams) else LogisticParams(**(params or {})))
    if kind == "majority":
        return MajorityClassifier()
    raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")


def cross_validate(
    X,
    y,
    model: str = "forest",
    params=None,
    k: int = 5,
    stratified: bool = True,
    seed: int = 0,
    undersample_ratio: float | None = None,
    workers: int = 1,
) -> EvalMetrics:
    """k-fold CV; metrics pooled over all out-of-fold predictions.

    Undersampling, when requested, touches the training folds only.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    folds = stratified_folds(y, k, seed=seed, stratified=stratified)
    predictions = np.empty(len(y), dtype=np.int64)
    fold_metrics = []
    for i, test in enumerate(folds):
        train = np.ones(len(y), dtype=bool)
        train[test] = False
        X_train, y_train = X[train], y[train]
        if undersample_ratio is not None:
            fold_seed = int(np.random.SeedSequence([seed, i]).generate_state(1)[0])
            X_train, y_train = undersample_majority(X_train, y_train, undersample_ratio, fold_seed)
        m = make_model(model, params)
        if model == "forest":
            m.fit(X_train, y_train, workers=workers)
        else:
            m.fit(X_train, y_train)
        predictions[test] = m.predict(X[test])
        fold_metrics.append(evaluate_predictions(y[test], predictions[test]))
    pooled = evaluate_predictions(y, predictions)
    pooled.n_folds = k
    pooled.folds = fold_metrics
    return pooled
