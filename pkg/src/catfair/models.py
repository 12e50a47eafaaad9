"""Probabilistic binary classifiers: L1-penalized logistic regression and
gradient-boosted regression trees on the log-loss."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np
from scipy.special import expit

FORMAT = "catfair-model"
FORMAT_VERSION = 1

LOGISTIC_DEFAULTS = {"l1_strength": 1e-3, "max_iters": 500, "tolerance": 1e-8}
BOOSTED_DEFAULTS = {"tree_count": 100, "max_depth": 3, "learning_rate": 0.1}


def _check_xy(X, y) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2:
        raise ValueError("feature matrix must be two-dimensional")
    if y.ndim != 1 or len(y) != X.shape[0]:
        raise ValueError(f"dimension mismatch: {X.shape[0]} rows vs {y.shape} labels")
    if len(y) < 2:
        raise ValueError("need at least two rows")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    if len(np.unique(y)) < 2:
        raise ValueError("both classes must be present (single-class labels)")
    if not np.isfinite(X).all():
        raise ValueError("non-finite features")
    return X, y.astype(np.float64)


@dataclass(frozen=True)
class Prediction:
    scores: np.ndarray
    labels: np.ndarray = field(init=False)

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "labels", (scores > 0.5).astype(np.int8))


# -- logistic regression ---------------------------------------------------


def log_loss(w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray) -> float:
    """Mean negative log-likelihood of a logistic model."""
    z = X @ w + b
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def log_loss_grad(w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, float]:
    r = expit(X @ w + b) - y
    return X.T @ r / len(y), float(r.mean())


def _soft_threshold(v: np.ndarray, t: float) -> np.ndarray:
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


@dataclass(frozen=True)
class LogisticModel:
    weights: np.ndarray
    bias: float
    l1_strength: float
    objective: float
    n_iter: int
    trace: tuple[float, ...] = ()

    @property
    def n_features(self) -> int:
        return len(self.weights)

    def decision(self, X: np.ndarray) -> np.ndarray:
        return X @ self.weights + self.bias


def train_logistic(
    X,
    y,
    l1_strength: float = LOGISTIC_DEFAULTS["l1_strength"],
    max_iters: int = LOGISTIC_DEFAULTS["max_iters"],
    tolerance: float = LOGISTIC_DEFAULTS["tolerance"],
) -> LogisticModel:
    """Minimize mean log-loss + l1_strength * |w|_1 (bias unpenalized).

    Proximal gradient from zero; each step starts from a Barzilai-Borwein
    estimate and is halved until the quadratic upper bound holds, which keeps
    the objective monotone.
    """
    X, y = _check_xy(X, y)
    if l1_strength < 0:
        raise ValueError("l1_strength must be non-negative")
    w = np.zeros(X.shape[1])
    b = 0.0
    f = log_loss(w, b, X, y)
    obj = f
    trace = [obj]
    gw, gb = log_loss_grad(w, b, X, y)
    step = 1.0
    it = 0
    for it in range(1, max_iters + 1):
        for _ in range(60):
            w_new = _soft_threshold(w - step * gw, step * l1_strength)
            b_new = b - step * gb
            dw, db = w_new - w, b_new - b
            f_new = log_loss(w_new, b_new, X, y)
            bound = f + gw @ dw + gb * db + (dw @ dw + db * db) / (2.0 * step)
            if f_new <= bound:
                break
            step *= 0.5
        obj_new = f_new + l1_strength * np.abs(w_new).sum()
        if obj_new > obj:
            break
        improvement = obj - obj_new
        gw_new, gb_new = log_loss_grad(w_new, b_new, X, y)
        s2 = dw @ dw + db * db
        sy = dw @ (gw_new - gw) + db * (gb_new - gb)
        w, b, f, obj, gw, gb = w_new, b_new, f_new, obj_new, gw_new, gb_new
        trace.append(obj)
        if improvement < tolerance:
            break
        step = float(np.clip(s2 / sy, 1e-8, 1e8)) if sy > 0 else step * 2.0
    return LogisticModel(w, float(b), float(l1_strength), float(obj), it, tuple(trace))


# -- gradient-boosted trees -------------------------------------------------


@dataclass(frozen=True)
class Tree:
    """Flat binary tree; ``feature == -1`` marks a leaf. Rows with
    ``x[feature] <= threshold`` go left."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        while True:
            feat = self.feature[node]
            active = feat >= 0
            if not active.any():
                return self.value[node]
            idx = np.flatnonzero(active)
            go_left = X[idx, feat[idx]] <= self.threshold[node[idx]]
            node[idx] = np.where(go_left, self.left[node[idx]], self.right[node[idx]])

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
            np.array(d["feature"], dtype=np.int64),
            np.array(d["threshold"], dtype=np.float64),
            np.array(d["left"], dtype=np.int64),
            np.array(d["right"], dtype=np.int64),
            np.array(d["value"], dtype=np.float64),
        )


@dataclass(frozen=True)
class BoostedTreesModel:
    trees: tuple[Tree, ...]
    learning_rate: float
    tree_count: int
    max_depth: int
    base_score: float
    n_features: int

    def decision(self, X: np.ndarray) -> np.ndarray:
        out = np.full(len(X), self.base_score)
        for tree in self.trees:
            out = out + self.learning_rate * tree.apply(X)
        return out


class _TreeBuilder:
    def __init__(self, X, orders, max_depth):
        self.X = X
        self.orders = orders  # per-feature argsort of the training rows
        self.max_depth = max_depth

    def build(self, residual, hessian) -> tuple[Tree, np.ndarray]:
        self.r, self.h = residual, hessian
        self.nodes: list[list] = []
        self.node_of = np.zeros(len(residual), dtype=np.int64)
        self._grow(np.ones(len(residual), dtype=bool), 0)
        feat, thr, left, right, val = (np.array(c) for c in zip(*self.nodes))
        tree = Tree(feat.astype(np.int64), thr.astype(np.float64), left.astype(np.int64),
                    right.astype(np.int64), val.astype(np.float64))
        return tree, tree.value[self.node_of]

    def _grow(self, mask: np.ndarray, depth: int) -> int:
        me = len(self.nodes)
        self.nodes.append([-1, 0.0, -1, -1, 0.0])
        split = self._best_split(mask) if depth < self.max_depth else None
        if split is None:
            rows = np.flatnonzero(mask)
            hsum = self.h[rows].sum()
            self.nodes[me][4] = self.r[rows].sum() / max(hsum, 1e-12)
            self.node_of[rows] = me
            return me
        j, thr = split
        goes_left = mask & (self.X[:, j] <= thr)
        left = self._grow(goes_left, depth + 1)
        right = self._grow(mask & ~goes_left, depth + 1)
        self.nodes[me][:4] = [j, thr, left, right]
        return me

    def _best_split(self, mask: np.ndarray):
        best_gain, best = 1e-12, None
        for j, order in enumerate(self.orders):
            rows = order[mask[order]]
            m = len(rows)
            if m < 2:
                return None
            xs = self.X[rows, j]
            cs = np.cumsum(self.r[rows])
            total = cs[-1]
            k = np.flatnonzero(xs[:-1] < xs[1:])
            if not len(k):
                continue
            nl = k + 1.0
            gain = cs[k] ** 2 / nl + (total - cs[k]) ** 2 / (m - nl) - total**2 / m
            at = int(np.argmax(gain))
            if gain[at] > best_gain:
                a, b = xs[k[at]], xs[k[at] + 1]
                thr = 0.5 * a + 0.5 * b
                if not a <= thr < b:
                    thr = a
                best_gain, best = gain[at], (j, float(thr))
        return best


def train_boosted(
    X,
    y,
    tree_count: int = BOOSTED_DEFAULTS["tree_count"],
    max_depth: int = BOOSTED_DEFAULTS["max_depth"],
    learning_rate: float = BOOSTED_DEFAULTS["learning_rate"],
) -> BoostedTreesModel:
    """Gradient boosting on the log-loss.

    Each tree is grown on the residuals y - sigmoid(F) with variance-reduction
    splits; its leaves hold one Newton step sum(residual) / sum(p(1-p)).
    """
    X, y = _check_xy(X, y)
    if tree_count < 1 or max_depth < 1:
        raise ValueError("tree_count and max_depth must be at least 1")
    if not 0 < learning_rate <= 1:
        raise ValueError("learning_rate must lie in (0, 1]")
    prevalence = y.mean()
    base = float(np.log(prevalence / (1.0 - prevalence)))
    orders = [np.argsort(X[:, j], kind="stable") for j in range(X.shape[1])]
    builder = _TreeBuilder(X, orders, max_depth)
    F = np.full(len(y), base)
    trees = []
    for _ in range(tree_count):
        p = expit(F)
        tree, fitted = builder.build(y - p, p * (1.0 - p))
        trees.append(tree)
        F = F + learning_rate * fitted
    return BoostedTreesModel(tuple(trees), float(learning_rate), tree_count, max_depth, base, X.shape[1])


# -- prediction and persistence ---------------------------------------------

Model = Union[LogisticModel, BoostedTreesModel]


def predict(model: Model, X) -> Prediction:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise ValueError(
            f"dimension mismatch: model expects {model.n_features} columns, got {X.shape}"
        )
    return Prediction(expit(model.decision(X)))


def train(family: str, X, y, **params) -> Model:
    if family == "logistic":
        return train_logistic(X, y, **{**LOGISTIC_DEFAULTS, **params})
    if family == "boosted":
        return train_boosted(X, y, **{**BOOSTED_DEFAULTS, **params})
    raise ValueError(f"unknown model family {family!r}")


def model_to_dict(model: Model) -> dict:
    if isinstance(model, LogisticModel):
        body = {
            "family": "logistic",
            "weights": model.weights.tolist(),
            "bias": model.bias,
            "l1_strength": model.l1_strength,
            "objective": model.objective,
            "n_iter": model.n_iter,
        }
    else:
        body = {
            "family": "boosted",
            "learning_rate": model.learning_rate,
            "tree_count": model.tree_count,
            "max_depth": model.max_depth,
            "base_score": model.base_score,
            "n_features": model.n_features,
            "trees": [t.to_dict() for t in model.trees],
        }
    return {"format": FORMAT, "version": FORMAT_VERSION, **body}


def model_from_dict(d: dict) -> Model:
    if d.get("format") != FORMAT or d.get("version") != FORMAT_VERSION:
        raise ValueError("not a serialized model of a supported version")
    if d["family"] == "logistic":
        return LogisticModel(
            np.array(d["weights"], dtype=np.float64), d["bias"], d["l1_strength"],
            d["objective"], d["n_iter"],
        )
    if d["family"] == "boosted":
        return BoostedTreesModel(
            tuple(Tree.from_dict(t) for t in d["trees"]), d["learning_rate"],
            d["tree_count"], d["max_depth"], d["base_score"], d["n_features"],
        )
    raise ValueError(f"unknown model family {d['family']!r}")


def save_model(model: Model, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1))


def load_model(path: str | Path) -> Model:
    return model_from_dict(json.loads(Path(path).read_text()))
