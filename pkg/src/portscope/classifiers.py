"""K-nearest-neighbours and random forest with vote-fraction probabilities,
plus confidence-threshold rejection of unknown classes."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import UNKNOWN


@dataclass(frozen=True)
class Prediction:
    label: str
    confidence: float
    class_probs: dict


def _check_labels(labels):
    labels = [str(y) for y in labels]
    if not labels:
        raise ValueError("no training rows")
    return labels


class KnnModel:
    """Exhaustive-scan KNN with uniform weights.

    Distance ties are broken by lower training-row index.
    """

    def __init__(self, train_matrix, train_labels, n_neighbors: int = 5, p: float = 2.0):
        X = np.asarray(train_matrix, dtype=np.float64)
        labels = _check_labels(train_labels)
        if X.ndim != 2 or X.shape[0] != len(labels):
            raise ValueError("train_matrix must be 2-D with one row per label")
        if not 1 <= n_neighbors <= X.shape[0]:
            raise ValueError(f"n_neighbors={n_neighbors} needs 1..{X.shape[0]} training rows")
        if p < 1:
            raise ValueError("Minkowski p must be >= 1")
        self.train_matrix = X
        self.train_labels = labels
        self.n_neighbors = int(n_neighbors)
        self.p = float(p)
        self.classes = sorted(set(labels))
        self._codes = np.array([self.classes.index(y) for y in labels])

    def distances(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.train_matrix.shape[1],):
            raise ValueError(f"expected a row of {self.train_matrix.shape[1]} features, got shape {x.shape}")
        diff = np.abs(self.train_matrix - x)
        if self.p == 2.0:
            return np.sqrt(np.einsum("ij,ij->i", diff, diff))
        if self.p == 1.0:
            return diff.sum(axis=1)
        return (diff**self.p).sum(axis=1) ** (1.0 / self.p)

    def neighbors(self, x) -> np.ndarray:
        d = self.distances(x)
        return np.argsort(d, kind="stable")[: self.n_neighbors]

    def predict_proba(self, x) -> dict:
        idx = self.neighbors(x)
        votes = np.bincount(self._codes[idx], minlength=len(self.classes))
        return {c: votes[i] / self.n_neighbors for i, c in enumerate(self.classes)}

    def predict(self, x) -> str:
        """Majority vote; ties go to the smaller summed neighbour distance, then class name."""
        d = self.distances(x)
        idx = np.argsort(d, kind="stable")[: self.n_neighbors]
        votes = np.bincount(self._codes[idx], minlength=len(self.classes))
        dist_sum = np.bincount(self._codes[idx], weights=d[idx], minlength=len(self.classes))
        best = min(range(len(self.classes)), key=lambda i: (-votes[i], dist_sum[i], self.classes[i]))
        return self.classes[best]

    def to_dict(self) -> dict:
        return {
            "kind": "knn",
            "n_neighbors": self.n_neighbors,
            "p": self.p,
            "train_labels": self.train_labels,
            "train_matrix": self.train_matrix.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KnnModel":
        return cls(np.array(d["train_matrix"], dtype=np.float64), d["train_labels"], d["n_neighbors"], d["p"])


def knn_fit(matrix, labels, k: int = 5, p: float = 2.0) -> KnnModel:
    return KnnModel(matrix, labels, k, p)


def knn_predict_proba(model: KnnModel, x) -> dict:
    return model.predict_proba(x)


# -- random forest --------------------------------------------------------


@dataclass(eq=False)
class DecisionTree:
    """Array-encoded tree. Leaves have feature == -1 and class counts in ``value``."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # (n_nodes, n_classes) training counts

    def leaf_index(self, x) -> int:
        node = 0
        while self.feature[node] >= 0:
            node = self.left[node] if x[self.feature[node]] <= self.threshold[node] else self.right[node]
        return node

    def predict_proba(self, x) -> np.ndarray:
        counts = self.value[self.leaf_index(x)]
        return counts / counts.sum()

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DecisionTree":
        return cls(
            np.array(d["feature"], dtype=np.int64),
            np.array(d["threshold"], dtype=np.float64),
            np.array(d["left"], dtype=np.int64),
            np.array(d["right"], dtype=np.int64),
            np.array(d["value"], dtype=np.float64).reshape(len(d["feature"]), -1),
        )


def _gini(counts):
    n = counts.sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = counts / n[..., None]
    return np.where(n > 0, 1.0 - np.sum(frac * frac, axis=-1), 0.0)


def _best_split(X, y, n_classes, feats):
    """Lowest weighted child Gini over candidate features; None if nothing improves on the parent."""
    n = y.size
    parent = _gini(np.bincount(y, minlength=n_classes).astype(np.float64))
    best = None
    best_score = parent * n
    for f in feats:
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        onehot = np.zeros((n, n_classes))
        onehot[np.arange(n), y[order]] = 1.0
        left = np.cumsum(onehot, axis=0)[:-1]
        right = left[-1] + onehot[-1] - left
        valid = xs[1:] > xs[:-1]
        if not valid.any():
            continue
        nl = np.arange(1, n)
        score = _gini(left) * nl + _gini(right) * (n - nl)
        score[~valid] = np.inf
        i = int(np.argmin(score))
        if score[i] < best_score - 1e-12:
            best_score = score[i]
            best = (int(f), 0.5 * (xs[i] + xs[i + 1]))
            # midpoint can round onto the upper value for adjacent floats
            if best[1] >= xs[i + 1]:
                best = (int(f), float(xs[i]))
    return best


def build_tree(X, y, n_classes: int, max_features: int, rng: np.random.Generator) -> DecisionTree:
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(counts):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(counts)
        return len(feature) - 1

    root = new_node(np.bincount(y, minlength=n_classes))
    stack = [(root, np.arange(y.size))]
    while stack:
        node, rows = stack.pop()
        ys = y[rows]
        if np.all(ys == ys[0]):
            continue
        feats = rng.choice(X.shape[1], size=max_features, replace=False)
        split = _best_split(X[rows], ys, n_classes, feats)
        if split is None:
            continue
        f, thr = split
        go_left = X[rows, f] <= thr
        lrows, rrows = rows[go_left], rows[~go_left]
        feature[node], threshold[node] = f, thr
        left[node] = new_node(np.bincount(y[lrows], minlength=n_classes))
        right[node] = new_node(np.bincount(y[rrows], minlength=n_classes))
        stack.append((right[node], rrows))
        stack.append((left[node], lrows))

    return DecisionTree(
        np.array(feature, dtype=np.int64),
        np.array(threshold, dtype=np.float64),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(value, dtype=np.float64),
    )


@dataclass(eq=False)
class ForestModel:
    classes: list
    trees: list = field(default_factory=list)
    n_features: int = 0
    seed: int = 0

    def predict_proba(self, x) -> dict:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n_features,):
            raise ValueError(f"expected a row of {self.n_features} features, got shape {x.shape}")
        probs = np.mean([t.predict_proba(x) for t in self.trees], axis=0)
        return {c: float(probs[i]) for i, c in enumerate(self.classes)}

    def to_dict(self) -> dict:
        return {
            "kind": "forest",
            "classes": self.classes,
            "n_features": self.n_features,
            "seed": self.seed,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ForestModel":
        return cls(list(d["classes"]), [DecisionTree.from_dict(t) for t in d["trees"]], d["n_features"], d["seed"])


def forest_fit(matrix, labels, n_trees: int = 100, seed: int = 0) -> ForestModel:
    """Bagged Gini trees grown to purity, sqrt(n_features) candidates per node.

    Tree ``i`` draws from its own stream seeded by ``(seed, i)``.
    """
    X = np.asarray(matrix, dtype=np.float64)
    labels = _check_labels(labels)
    if X.ndim != 2 or X.shape[0] != len(labels):
        raise ValueError("matrix must be 2-D with one row per label")
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    classes = sorted(set(labels))
    y = np.array([classes.index(c) for c in labels])
    n, d = X.shape
    max_features = max(1, math.ceil(math.sqrt(d)))
    trees = []
    for i in range(n_trees):
        rng = np.random.default_rng([seed, i])
        boot = rng.integers(0, n, size=n)
        trees.append(build_tree(X[boot], y[boot], len(classes), max_features, rng))
    return ForestModel(classes, trees, d, seed)


def forest_predict_proba(model: ForestModel, x) -> dict:
    return model.predict_proba(x)


def predict_with_rejection(probs: dict, threshold: float = 0.5) -> Prediction:
    """Top class if its probability reaches ``threshold``, else UNKNOWN.

    Equal top probabilities resolve to the lexicographically smallest class.
    """
    if not probs:
        raise ValueError("empty probability map")
    label = min(probs, key=lambda c: (-probs[c], c))
    confidence = float(probs[label])
    if confidence < threshold:
        label = UNKNOWN
    return Prediction(label, confidence, dict(probs))
