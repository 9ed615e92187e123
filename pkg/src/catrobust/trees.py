"""Tree ensembles trained on embedded (or one-hot) categorical inputs.

* gradient-boosted stumps and depth-k trees on the logistic loss, with
  Newton leaf values ``-G / (H + lam)``;
* a bootstrap random forest of gini CART trees.

Splits are exact: every midpoint between consecutive distinct feature values
is a candidate, and rows with ``x <= threshold`` go left.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .net import sigmoid

NEWTON_LAMBDA = 1e-6
_MIN_GAIN = 1e-12


@dataclass
class Tree:
    feature: np.ndarray      # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def depth(self) -> int:
        def walk(k):
            if self.feature[k] < 0:
                return 0
            return 1 + max(walk(self.left[k]), walk(self.right[k]))
        return walk(0)

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        while True:
            f = self.feature[node]
            inner = f >= 0
            if not inner.any():
                break
            r, nd = rows[inner], node[inner]
            go_left = X[r, f[inner]] <= self.threshold[nd]
            node[inner] = np.where(go_left, self.left[nd], self.right[nd])
        return self.value[node]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d) -> "Tree":
        return cls(
            np.asarray(d["feature"], dtype=np.int64),
            np.asarray(d["threshold"], dtype=np.float64),
            np.asarray(d["left"], dtype=np.int64),
            np.asarray(d["right"], dtype=np.int64),
            np.asarray(d["value"], dtype=np.float64),
        )


@dataclass(frozen=True)
class Stump:
    feature: int
    threshold: float
    left_value: float
    right_value: float

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        return np.where(X[:, self.feature] <= self.threshold, self.left_value, self.right_value)

    def to_dict(self) -> dict:
        return {"feature": [self.feature, -1, -1], "threshold": [self.threshold, 0.0, 0.0],
                "left": [1, -1, -1], "right": [2, -1, -1],
                "value": [0.0, self.left_value, self.right_value]}


@dataclass
class BoostedEnsemble:
    trees: list = field(default_factory=list)
    learning_rate: float = 0.1
    base_score: float = 0.0

    def decision_function(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        out = np.full(len(X), self.base_score)
        for tree in self.trees:
            out += self.learning_rate * tree.predict(X)
        return out

    def predict_proba(self, X) -> np.ndarray:
        return sigmoid(self.decision_function(X))

    def predict(self, X) -> np.ndarray:
        return (self.decision_function(X) > 0).astype(np.int64)

    def to_dict(self) -> dict:
        return {"kind": "boosted", "learning_rate": self.learning_rate,
                "base_score": self.base_score, "trees": [t.to_dict() for t in self.trees]}


@dataclass
class Forest:
    trees: list[Tree]
    seeds: list[int]
    max_features: float | str = "sqrt"

    def predict_proba(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if not self.trees:
            return np.full(len(X), 0.5)
        return np.mean([t.predict(X) for t in self.trees], axis=0)

    def decision_function(self, X) -> np.ndarray:
        return self.predict_proba(X) - 0.5

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X) > 0.5).astype(np.int64)

    def to_dict(self) -> dict:
        return {"kind": "forest", "seeds": list(self.seeds), "max_features": self.max_features,
                "trees": [t.to_dict() for t in self.trees]}


def model_from_dict(d: dict):
    trees = [Tree.from_dict(t) for t in d["trees"]]
    if d["kind"] == "boosted":
        return BoostedEnsemble(trees, d["learning_rate"], d["base_score"])
    if d["kind"] == "forest":
        return Forest(trees, d["seeds"], d.get("max_features", "sqrt"))
    raise ValueError(f"unknown model kind {d['kind']!r}")


# ---------------------------------------------------------------- split search

def _best_split(Xn, stat_a, stat_b, gain_fn):
    """Best (feature, threshold, gain) over the columns of ``Xn``.

    ``gain_fn(A_left, B_left, A_tot, B_tot)`` scores every cut given prefix
    sums of the two per-row statistics.  Ties go to the lowest column, then
    the lowest threshold.
    """
    n = len(Xn)
    if n < 2:
        return -1, 0.0, 0.0
    order = np.argsort(Xn, axis=0, kind="stable")
    Xs = np.take_along_axis(Xn, order, axis=0)
    A = np.cumsum(stat_a[order], axis=0)
    B = np.cumsum(stat_b[order], axis=0)
    gains = gain_fn(A[:-1], B[:-1], A[-1], B[-1])
    distinct = Xs[1:] > Xs[:-1]
    gains = np.where(distinct, gains, -np.inf)
    flat = int(np.argmax(gains.T))
    col, pos = divmod(flat, n - 1)
    best = gains[pos, col]
    if not np.isfinite(best) or best <= _MIN_GAIN:
        return -1, 0.0, 0.0
    thr = 0.5 * (Xs[pos, col] + Xs[pos + 1, col])
    if not thr < Xs[pos + 1, col]:  # midpoint rounded up onto the right value
        thr = Xs[pos, col]
    return col, float(thr), float(best)


def _newton_gain(lam):
    def gain(G_l, H_l, G, H):
        G_r, H_r = G - G_l, H - H_l
        return G_l ** 2 / (H_l + lam) + G_r ** 2 / (H_r + lam) - G ** 2 / (H + lam)
    return gain


def _gini_gain(N_l, P_l, N, P):
    N_r, P_r = N - N_l, P - P_l
    with np.errstate(divide="ignore", invalid="ignore"):
        imp_l = N_l - (P_l ** 2 + (N_l - P_l) ** 2) / N_l
        imp_r = N_r - (P_r ** 2 + (N_r - P_r) ** 2) / N_r
    parent = N - (P ** 2 + (N - P) ** 2) / N
    out = parent - imp_l - imp_r
    return np.where((N_l > 0) & (N_r > 0), out, -np.inf)


class _Builder:
    def __init__(self):
        self.feature, self.threshold, self.left, self.right, self.value = [], [], [], [], []

    def add(self, value) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(float(value))
        return len(self.value) - 1

    def tree(self) -> Tree:
        return Tree(np.array(self.feature, dtype=np.int64), np.array(self.threshold),
                    np.array(self.left, dtype=np.int64), np.array(self.right, dtype=np.int64),
                    np.array(self.value))


def fit_newton_tree(X, g, h, depth: int, lam: float = NEWTON_LAMBDA) -> Tree:
    """Greedy regression tree on gradient/hessian statistics."""
    X = np.asarray(X, dtype=np.float64)
    b = _Builder()
    gain = _newton_gain(lam)

    def grow(idx, level):
        node = b.add(-g[idx].sum() / (h[idx].sum() + lam))
        if level >= depth:
            return node
        col, thr, _ = _best_split(X[idx], g[idx], h[idx], gain)
        if col < 0:
            return node
        go_left = X[idx, col] <= thr
        b.feature[node], b.threshold[node] = col, thr
        b.left[node] = grow(idx[go_left], level + 1)
        b.right[node] = grow(idx[~go_left], level + 1)
        return node

    grow(np.arange(len(X)), 0)
    return b.tree()


def _logistic_stats(y, F):
    p = sigmoid(F)
    return p - y, p * (1.0 - p)


def logistic_loss(y, F) -> float:
    return float(np.mean(np.maximum(F, 0) - F * y + np.log1p(np.exp(-np.abs(F)))))


def _base_score(y) -> float:
    p = np.clip(np.mean(y), 1e-6, 1 - 1e-6)
    return float(np.log(p / (1 - p)))


def fit_boosted_trees(X, y, depth: int = 6, n_estimators: int = 100, lr: float = 0.1,
                      lam: float = NEWTON_LAMBDA, history: list | None = None) -> BoostedEnsemble:
    """Logistic gradient boosting with depth-``depth`` Newton trees.

    If ``history`` is a list, the training loss before the first and after
    every round is appended to it.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(X) == 0 or len(X) != len(y):
        raise ValueError("X and y must be non-empty and aligned")
    model = BoostedEnsemble([], lr, _base_score(y))
    F = np.full(len(y), model.base_score)
    if history is not None:
        history.append(logistic_loss(y, F))
    for _ in range(n_estimators):
        g, h = _logistic_stats(y, F)
        tree = fit_newton_tree(X, g, h, depth, lam)
        model.trees.append(tree)
        F = F + lr * tree.predict(X)
        if history is not None:
            history.append(logistic_loss(y, F))
    return model


def fit_gbs(X, y, n_estimators: int = 100, lr: float = 0.1, lam: float = NEWTON_LAMBDA,
            history: list | None = None) -> BoostedEnsemble:
    """Gradient-boosted decision stumps."""
    model = fit_boosted_trees(X, y, depth=1, n_estimators=n_estimators, lr=lr, lam=lam,
                              history=history)
    stumps = []
    for t in model.trees:
        if t.feature[0] < 0:
            stumps.append(Stump(0, np.inf, float(t.value[0]), float(t.value[0])))
        else:
            stumps.append(Stump(int(t.feature[0]), float(t.threshold[0]),
                                float(t.value[t.left[0]]), float(t.value[t.right[0]])))
    model.trees = stumps
    return model


def _n_candidates(p: int, max_features) -> int:
    if max_features == "sqrt":
        return max(1, int(np.sqrt(p)))
    if max_features is None:
        return p
    if isinstance(max_features, float):
        return max(1, int(round(max_features * p)))
    return max(1, min(p, int(max_features)))


def fit_cart(X, y, max_depth: int | None = None, max_features=None,
             rng: np.random.Generator | None = None) -> Tree:
    """Gini classification tree; leaves store the positive-class fraction."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    rng = rng or np.random.default_rng(0)
    p = X.shape[1]
    k = _n_candidates(p, max_features)
    ones = np.ones(len(y))
    b = _Builder()

    def grow(idx, level):
        node = b.add(y[idx].mean())
        pos = y[idx].sum()
        if pos == 0 or pos == len(idx) or (max_depth is not None and level >= max_depth):
            return node
        feats = np.arange(p) if k == p else np.sort(rng.choice(p, size=k, replace=False))
        col, thr, _ = _best_split(X[np.ix_(idx, feats)], ones[idx], y[idx], _gini_gain)
        if col < 0:
            return node
        col = int(feats[col])
        go_left = X[idx, col] <= thr
        b.feature[node], b.threshold[node] = col, thr
        b.left[node] = grow(idx[go_left], level + 1)
        b.right[node] = grow(idx[~go_left], level + 1)
        return node

    grow(np.arange(len(X)), 0)
    return b.tree()


def fit_forest(X, y, n_trees: int = 100, max_depth: int | None = None, seed: int = 0,
               max_features="sqrt", bootstrap: bool = True) -> Forest:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    master = np.random.default_rng(seed)
    seeds = [int(s) for s in master.integers(0, 2**31 - 1, size=n_trees)]
    trees = []
    for s in seeds:
        rng = np.random.default_rng(s)
        idx = rng.integers(0, len(X), size=len(X)) if bootstrap else np.arange(len(X))
        trees.append(fit_cart(X[idx], y[idx], max_depth, max_features, rng))
    return Forest(trees, seeds, max_features)


def predict(model, X):
    """``(labels, scores)`` for any ensemble in this module."""
    return model.predict(X), model.predict_proba(X)
