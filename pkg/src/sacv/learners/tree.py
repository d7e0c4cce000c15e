"""CART-style binary decision tree producing leaf positive-fractions as scores."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import DimensionError, ParameterError, TrainingError

_CRITERIA = ("gini", "entropy")


@dataclass(frozen=True)
class TreeHyperparams:
    max_depth: int = 4
    min_samples_leaf: int = 1
    split_criterion: str = "gini"
    class_weight: bool = True

    def validate(self) -> None:
        if not isinstance(self.max_depth, (int, np.integer)) or self.max_depth < 1:
            raise ParameterError(f"max_depth must be an integer >= 1, got {self.max_depth!r}")
        if not isinstance(self.min_samples_leaf, (int, np.integer)) or self.min_samples_leaf < 1:
            raise ParameterError(f"min_samples_leaf must be an integer >= 1, got {self.min_samples_leaf!r}")
        if self.split_criterion not in _CRITERIA:
            raise ParameterError(f"split_criterion must be one of {_CRITERIA}")

    def to_dict(self) -> dict:
        return asdict(self)


def _impurity(p0: np.ndarray, p1: np.ndarray, criterion: str) -> np.ndarray:
    # p0 + p1 == 1 elementwise
    if criterion == "gini":
        return 1.0 - p0 * p0 - p1 * p1
    with np.errstate(divide="ignore", invalid="ignore"):
        e0 = np.where(p0 > 0, -p0 * np.log2(np.where(p0 > 0, p0, 1.0)), 0.0)
        e1 = np.where(p1 > 0, -p1 * np.log2(np.where(p1 > 0, p1, 1.0)), 0.0)
    return e0 + e1


class DecisionTree:
    """Trained tree stored as flat node arrays (depth-first numbering).

    Internal nodes route ``x[feature] <= threshold`` to ``left``; leaves have
    ``feature == -1`` and score ``value`` (fraction of positive training rows).
    """

    kind = "tree"

    def __init__(self, feature, threshold, left, right, value, n_samples, feature_dim, hp):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=float)
        self.n_samples = np.asarray(n_samples, dtype=np.int64)
        self.feature_dim = int(feature_dim)
        self.hyperparams = hp

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = np.flatnonzero(self.feature[node] >= 0)
        while active.size:
            nd = node[active]
            go_left = X[active, self.feature[nd]] <= self.threshold[nd]
            node[active] = np.where(go_left, self.left[nd], self.right[nd])
            active = active[self.feature[node[active]] >= 0]
        return self.value[node]

    def to_dict(self) -> dict:
        nodes = []
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                nodes.append({"feature": int(self.feature[i]), "threshold": float(self.threshold[i]),
                              "left": int(self.left[i]), "right": int(self.right[i]),
                              "n": int(self.n_samples[i]), "value": float(self.value[i])})
            else:
                nodes.append({"feature": -1, "n": int(self.n_samples[i]), "value": float(self.value[i])})
        return {"kind": "tree", "feature_dim": self.feature_dim,
                "hyperparams": self.hyperparams.to_dict(), "nodes": nodes}

    @classmethod
    def from_dict(cls, doc: dict) -> "DecisionTree":
        nodes = doc["nodes"]
        return cls(
            [nd["feature"] for nd in nodes],
            [nd.get("threshold", 0.0) for nd in nodes],
            [nd.get("left", -1) for nd in nodes],
            [nd.get("right", -1) for nd in nodes],
            [nd["value"] for nd in nodes],
            [nd["n"] for nd in nodes],
            doc["feature_dim"],
            TreeHyperparams(**doc["hyperparams"]),
        )


def _best_split(X, y, weights, min_leaf, criterion):
    """Return (feature, threshold, left_mask) of the best split or None.

    Ties resolve to the lowest feature index, then the lowest threshold.
    """
    n, d = X.shape
    w0, w1 = weights
    n1 = int(y.sum())
    n0 = n - n1
    W = w0 * n0 + w1 * n1
    parent = _impurity(np.array([w0 * n0 / W]), np.array([w1 * n1 / W]), criterion)[0]
    best_gain, best = -np.inf, None
    lo, hi = min_leaf - 1, n - min_leaf - 1  # last row of the left child, inclusive range
    if lo > hi:
        return None
    for j in range(d):
        order = np.argsort(X[:, j], kind="stable")
        xs = X[order, j]
        c1 = np.cumsum(y[order])[lo:hi + 1]
        cnt = np.arange(lo + 1, hi + 2)
        c0 = cnt - c1
        ok = xs[lo:hi + 1] < xs[lo + 1:hi + 2]
        if not ok.any():
            continue
        L0, L1 = w0 * c0, w1 * c1
        R0, R1 = w0 * (n0 - c0), w1 * (n1 - c1)
        WL, WR = L0 + L1, R0 + R1
        child = (WL * _impurity(L0 / WL, L1 / WL, criterion)
                 + WR * _impurity(R0 / WR, R1 / WR, criterion)) / W
        gain = np.where(ok, parent - child, -np.inf)
        k = int(np.argmax(gain))
        if gain[k] > best_gain:
            a, b = xs[lo + k], xs[lo + k + 1]
            thr = 0.5 * (a + b)
            if not a <= thr < b:
                thr = a
            best_gain, best = gain[k], (j, float(thr))
    if best is None or best_gain < -1e-12:
        return None
    j, thr = best
    return j, thr, X[:, j] <= thr


def train_tree(train, hp: TreeHyperparams) -> DecisionTree:
    """Grow a tree depth-first; leaves score the positive fraction of their rows."""
    hp.validate()
    X = np.asarray(train.features, dtype=float)
    y = np.asarray(train.labels, dtype=np.int64)
    n1 = int(y.sum())
    if n1 == 0 or n1 == y.size:
        raise TrainingError("training set holds a single class")
    if hp.class_weight:
        weights = (y.size / (2.0 * (y.size - n1)), y.size / (2.0 * n1))
    else:
        weights = (1.0, 1.0)

    feature, threshold, left, right, value, count = [], [], [], [], [], []

    def new_node(rows):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(y[rows].mean()))
        count.append(int(rows.size))
        return len(feature) - 1

    root = new_node(np.arange(y.size))
    stack = [(root, np.arange(y.size), 0)]
    while stack:
        node, rows, depth = stack.pop()
        ys = y[rows]
        if depth >= hp.max_depth or ys.min() == ys.max() or rows.size < 2 * hp.min_samples_leaf:
            continue
        split = _best_split(X[rows], ys, weights, hp.min_samples_leaf, hp.split_criterion)
        if split is None:
            continue
        j, thr, mask = split
        feature[node], threshold[node] = j, thr
        lrows, rrows = rows[mask], rows[~mask]
        left[node] = new_node(lrows)
        right[node] = new_node(rrows)
        # LIFO: the left subtree is expanded first
        stack.append((right[node], rrows, depth + 1))
        stack.append((left[node], lrows, depth + 1))
    return DecisionTree(feature, threshold, left, right, value, count, X.shape[1], hp)


def check_input(model, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.size == 0:
        return X.reshape(0, model.feature_dim)
    if X.ndim != 2 or X.shape[1] != model.feature_dim:
        raise DimensionError(f"expected an n x {model.feature_dim} matrix, got shape {X.shape}")
    return X
