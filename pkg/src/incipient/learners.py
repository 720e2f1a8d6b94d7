"""Base learners emitting anomaly scores in [0, 1].

Two families are provided: a CART classification tree grown on Gini impurity
and a one-hidden-layer rectifier network trained with mini-batch SGD on
binary cross-entropy. Trained models are immutable value objects.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .rng import make_rng


class TrainingError(RuntimeError):
    pass


class DimensionError(ValueError):
    pass


def fingerprint(X: np.ndarray, y: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(X, dtype=np.float64).tobytes())
    h.update(np.ascontiguousarray(y, dtype=np.int8).tobytes())
    return h.hexdigest()[:16]


def _check_two_classes(y: np.ndarray) -> None:
    if y.size == 0 or y.min() == y.max():
        raise TrainingError("training data must contain both classes")


def _check_dim(X: np.ndarray, d: int) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != d:
        raise DimensionError(f"model expects {d} features, got {X.shape[1]}")
    return X


# ---------------------------------------------------------------------------
# Decision tree
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TreeParams:
    max_depth: int = 8
    min_samples_split: int = 2

    def __post_init__(self):
        if self.max_depth < 1:
            raise ValueError(f"max_depth must be >= 1, got {self.max_depth}")
        if self.min_samples_split < 1:
            raise ValueError(f"min_samples_split must be >= 1, got {self.min_samples_split}")


def best_split(X: np.ndarray, y: np.ndarray):
    """Return ``(feature, threshold, weighted_gini)`` of the best binary split.

    Candidate thresholds are midpoints between consecutive distinct values of
    each feature. Ties go to the lowest feature index, then the lowest
    threshold. Returns ``None`` when every feature is constant.
    """
    n = y.size
    best = None
    for j in range(X.shape[1]):
        order = np.argsort(X[:, j], kind="stable")
        xs = X[order, j]
        cut = np.flatnonzero(xs[:-1] < xs[1:])
        if cut.size == 0:
            continue
        pos_left = np.cumsum(y[order])[cut].astype(np.float64)
        n_left = (cut + 1).astype(np.float64)
        n_right = n - n_left
        pos_right = y.sum() - pos_left
        # n_side * gini_side = 2 * pos * neg / n_side
        impurity = (
            2.0 * pos_left * (n_left - pos_left) / n_left
            + 2.0 * pos_right * (n_right - pos_right) / n_right
        ) / n
        k = int(np.argmin(impurity))
        if best is None or impurity[k] < best[2] - 1e-12:
            best = (j, 0.5 * (xs[cut[k]] + xs[cut[k] + 1]), float(impurity[k]))
    return best


@dataclass(frozen=True, eq=False)
class TreeModel:
    """Array-encoded binary tree; ``feature == -1`` marks a leaf.

    A sample goes left when ``x[feature] <= threshold``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_features: int
    fingerprint: str = ""
    family: str = "tree"

    def score(self, X: np.ndarray) -> np.ndarray:
        X = _check_dim(X, self.n_features)
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        active = self.feature[node] >= 0
        while active.any():
            r = rows[active]
            nd = node[r]
            go_left = X[r, self.feature[nd]] <= self.threshold[nd]
            node[r] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] >= 0
        return self.value[node].copy()

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    def to_arrays(self) -> dict:
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "left": self.left,
            "right": self.right,
            "value": self.value,
            "n_features": np.array(self.n_features),
        }

    @classmethod
    def from_arrays(cls, arrays, fingerprint=""):
        return cls(
            arrays["feature"], arrays["threshold"], arrays["left"], arrays["right"],
            arrays["value"], int(arrays["n_features"]), fingerprint,
        )


def train_tree(X: np.ndarray, y: np.ndarray, params: TreeParams = TreeParams()) -> TreeModel:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(np.int64)
    _check_two_classes(y)

    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(y[idx].mean()))
        return len(feature) - 1

    root = new_node(np.arange(y.size))
    stack = [(root, np.arange(y.size), 0)]
    while stack:
        node, idx, depth = stack.pop()
        yi = y[idx]
        if depth >= params.max_depth or idx.size < params.min_samples_split or yi.min() == yi.max():
            continue
        split = best_split(X[idx], yi)
        if split is None:
            continue
        j, thr, _ = split
        go_left = X[idx, j] <= thr
        li, ri = idx[go_left], idx[~go_left]
        feature[node], threshold[node] = j, thr
        left[node] = new_node(li)
        right[node] = new_node(ri)
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))

    return TreeModel(
        np.asarray(feature, dtype=np.int64),
        np.asarray(threshold, dtype=np.float64),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
        np.asarray(value, dtype=np.float64),
        X.shape[1],
        fingerprint(X, y),
    )


# ---------------------------------------------------------------------------
# Feed-forward network
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NetParams:
    hidden_width: int = 16
    learning_rate: float = 0.1
    epochs: int = 60
    batch_size: int = 32
    init_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        for name in ("hidden_width", "batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if not (self.learning_rate > 0 and self.init_scale > 0):
            raise ValueError("learning_rate and init_scale must be positive")


def _sigmoid(t):
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def init_weights(d: int, params: NetParams, rng: np.random.Generator) -> dict:
    h = params.hidden_width
    return {
        "W1": rng.standard_normal((d, h)) * params.init_scale / np.sqrt(d),
        "b1": np.zeros(h),
        "w2": rng.standard_normal(h) * params.init_scale / np.sqrt(h),
        "b2": np.zeros(1),
    }


def forward_logits(weights: dict, X: np.ndarray):
    pre = X @ weights["W1"] + weights["b1"]
    hidden = np.maximum(pre, 0.0)
    return hidden @ weights["w2"] + weights["b2"][0], pre, hidden


def loss_and_grad(weights: dict, X: np.ndarray, y: np.ndarray):
    """Mean binary cross-entropy and its gradient w.r.t. every weight array."""
    logits, pre, hidden = forward_logits(weights, X)
    # log(1 + exp(t)) - y t, evaluated stably
    loss = float(np.mean(np.logaddexp(0.0, logits) - y * logits))
    g_logit = (_sigmoid(logits) - y) / y.size
    g_hidden = np.outer(g_logit, weights["w2"]) * (pre > 0)
    grads = {
        "W1": X.T @ g_hidden,
        "b1": g_hidden.sum(axis=0),
        "w2": hidden.T @ g_logit,
        "b2": np.array([g_logit.sum()]),
    }
    return loss, grads


@dataclass(frozen=True, eq=False)
class NetModel:
    W1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    fingerprint: str = ""
    family: str = "net"

    @property
    def n_features(self) -> int:
        return self.W1.shape[0]

    def score(self, X: np.ndarray) -> np.ndarray:
        X = _check_dim(X, self.n_features)
        logits, _, _ = forward_logits(self.weights, X)
        return _sigmoid(logits)

    @property
    def weights(self) -> dict:
        return {"W1": self.W1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

    def to_arrays(self) -> dict:
        return dict(self.weights)

    @classmethod
    def from_arrays(cls, arrays, fingerprint=""):
        return cls(arrays["W1"], arrays["b1"], arrays["w2"], arrays["b2"], fingerprint)


def train_net(X: np.ndarray, y: np.ndarray, params: NetParams = NetParams()) -> NetModel:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(np.float64)
    _check_two_classes(y)
    weights = init_weights(X.shape[1], params, make_rng(params.seed, "net-init"))
    order_rng = make_rng(params.seed, "net-batches")
    n = y.size
    for epoch in range(params.epochs):
        perm = order_rng.permutation(n)
        for start in range(0, n, params.batch_size):
            b = perm[start:start + params.batch_size]
            loss, grads = loss_and_grad(weights, X[b], y[b])
            if not np.isfinite(loss):
                raise TrainingError(f"loss became non-finite in epoch {epoch}")
            for k in weights:
                weights[k] = weights[k] - params.learning_rate * grads[k]
    return NetModel(weights["W1"], weights["b1"], weights["w2"], weights["b2"], fingerprint(X, y))


FAMILIES = {"tree": (TreeParams, train_tree, TreeModel), "net": (NetParams, train_net, NetModel)}


def score(model, X: np.ndarray) -> np.ndarray:
    return model.score(X)
