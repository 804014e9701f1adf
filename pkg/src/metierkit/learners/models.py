"""CART decision tree, random forest and softmax gradient boosting."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from typing import Optional, Sequence

import numpy as np

from ..labels import METIERS
from . import _engine


class ColumnMismatch(ValueError):
    pass


@dataclass(frozen=True)
class LearnerConfig:
    """Hyper-parameters for all three learners.

    Only the fields relevant to ``kind`` are used. ``n_jobs`` controls the
    worker count and never the result.
    """

    kind: str = "boost"  # "tree" | "forest" | "boost"
    max_depth: Optional[int] = 10
    min_leaf: Optional[int] = None  # None: 2 for classification trees, 1 for boosting
    num_trees: int = 250
    max_features: Optional[int] = None  # forest; None -> ceil(sqrt(d))
    nrounds: int = 50
    early_stopping_rounds: Optional[int] = 20
    learning_rate: float = 0.3
    reg_lambda: float = 1.0
    seed: int = 0
    n_jobs: int = 1

    def __post_init__(self):
        if self.kind not in ("tree", "forest", "boost"):
            raise ValueError(f"unknown learner kind {self.kind!r}")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be positive")
        if self.min_leaf is not None and self.min_leaf < 1:
            raise ValueError("min_leaf must be positive")
        if self.num_trees < 1 or self.nrounds < 1:
            raise ValueError("num_trees and nrounds must be positive")
        if self.early_stopping_rounds is not None and self.early_stopping_rounds < 1:
            raise ValueError("early_stopping_rounds must be positive")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning_rate must lie in (0, 1]")
        if self.reg_lambda < 0:
            raise ValueError("reg_lambda must be non-negative")

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def to_dict(self):
        return asdict(self)


@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # (nodes, K) class distribution, or (nodes,) leaf weight

    def apply(self, X):
        return _engine.apply_tree(X, self.feature, self.threshold, self.left, self.right)

    def depth(self):
        depth = np.zeros(len(self.feature), dtype=np.int64)
        for k in range(len(self.feature)):
            if self.left[k] >= 0:
                depth[self.left[k]] = depth[self.right[k]] = depth[k] + 1
        return int(depth.max())

    @property
    def n_nodes(self):
        return len(self.feature)


@dataclass
class _Model:
    classes: list
    columns: list
    config: LearnerConfig
    meta: dict = field(default_factory=dict)

    def _design(self, X, columns=None):
        if hasattr(X, "X") and hasattr(X, "column_names"):
            X, columns = X.X, X.column_names
        X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
        if X.ndim != 2:
            raise ValueError("X must be two-dimensional")
        if columns is None:
            if X.shape[1] != len(self.columns):
                raise ColumnMismatch(f"expected {len(self.columns)} columns, got {X.shape[1]}")
            return X
        columns = list(columns)
        if columns == self.columns:
            return X
        missing = [c for c in self.columns if c not in columns]
        extra = [c for c in columns if c not in self.columns]
        if missing or extra:
            raise ColumnMismatch(f"column mismatch; missing: {missing}; extra: {extra}")
        pos = {c: j for j, c in enumerate(columns)}
        return np.ascontiguousarray(X[:, [pos[c] for c in self.columns]])

    def predict(self, X, columns=None):
        proba = self.predict_proba(X, columns)
        return [self.classes[k] for k in np.argmax(proba, axis=1)]


@dataclass
class TreeModel(_Model):
    tree: Tree = None

    def predict_proba(self, X, columns=None):
        X = self._design(X, columns)
        return self.tree.value[self.tree.apply(X)]


@dataclass
class ForestModel(_Model):
    trees: list = field(default_factory=list)
    seeds: list = field(default_factory=list)
    max_features: int = 1
    importance: Optional[np.ndarray] = None

    @property
    def num_trees(self):
        return len(self.trees)

    def predict_proba(self, X, columns=None):
        """Mean of the trees' leaf class distributions."""
        X = self._design(X, columns)
        acc = np.zeros((X.shape[0], len(self.classes)))
        for t in self.trees:
            acc += t.value[t.apply(X)]
        return acc / len(self.trees)

    def votes(self, X, columns=None):
        X = self._design(X, columns)
        counts = np.zeros((X.shape[0], len(self.classes)), dtype=np.int64)
        rows = np.arange(X.shape[0])
        for t in self.trees:
            counts[rows, np.argmax(t.value[t.apply(X)], axis=1)] += 1
        return counts

    def predict(self, X, columns=None):
        """Majority vote of per-tree argmax classes; ties to the lowest class index."""
        return [self.classes[k] for k in np.argmax(self.votes(X, columns), axis=1)]


@dataclass
class BoostModel(_Model):
    rounds: list = field(default_factory=list)  # rounds[r][k] -> Tree for class k
    learning_rate: float = 0.3
    rounds_used: int = 0
    best_validation_round: Optional[int] = None
    history: dict = field(default_factory=dict)

    def decision_function(self, X, columns=None, n_rounds=None):
        X = self._design(X, columns)
        scores = np.zeros((X.shape[0], len(self.classes)))
        for trees in self.rounds[: len(self.rounds) if n_rounds is None else n_rounds]:
            for k, t in enumerate(trees):
                scores[:, k] += self.learning_rate * t.value[t.apply(X)]
        return scores

    def predict_proba(self, X, columns=None, n_rounds=None):
        return softmax(self.decision_function(X, columns, n_rounds))


def softmax(scores):
    z = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _encode(y):
    labels = list(y)
    present = set(labels)
    classes = [c for c in METIERS if c in present] + sorted(present - set(METIERS))
    index = {c: i for i, c in enumerate(classes)}
    return classes, np.array([index[v] for v in labels], dtype=np.int64)


def _check_xy(X, y, columns):
    X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("training set has zero rows")
    if X.shape[1] == 0:
        raise ValueError("training set has zero columns")
    if len(y) != X.shape[0]:
        raise ValueError("X and y lengths differ")
    if not np.isfinite(X).all():
        raise ValueError("X contains non-finite values")
    columns = list(columns) if columns is not None else [f"x{j}" for j in range(X.shape[1])]
    if len(columns) != X.shape[1]:
        raise ValueError("columns length does not match X")
    return X, columns


def _tree_from(arrays):
    return Tree(**arrays)


def train_tree(X, y, config: LearnerConfig = LearnerConfig(kind="tree"), columns=None):
    """Greedy CART tree minimising weighted Gini impurity."""
    X, columns = _check_xy(X, y, columns)
    classes, yi = _encode(y)
    min_leaf = 2 if config.min_leaf is None else config.min_leaf
    arrays, _ = _engine.grow_gini(
        X, _engine.presort(X), yi, len(classes), max_depth=config.max_depth, min_leaf=min_leaf
    )
    model = TreeModel(classes=classes, columns=columns, config=config, tree=_tree_from(arrays))
    model.meta = {"rows": int(X.shape[0]), "seed": config.seed}
    return model


def train_forest(X, y, config: LearnerConfig = LearnerConfig(kind="forest"), columns=None):
    """Bagged CART trees with ``ceil(sqrt(d))`` candidate columns per split."""
    X, columns = _check_xy(X, y, columns)
    classes, yi = _encode(y)
    n, d = X.shape
    max_features = config.max_features or math.ceil(math.sqrt(d))
    min_leaf = 2 if config.min_leaf is None else config.min_leaf
    presorted = _engine.presort(X)
    seqs = np.random.SeedSequence(config.seed).spawn(config.num_trees)
    seeds = [int(s.generate_state(1)[0]) for s in seqs]

    def one(seed):
        rng = np.random.default_rng(seed)
        weight = np.bincount(rng.integers(0, n, size=n), minlength=n).astype(np.float64)
        arrays, imp = _engine.grow_gini(
            X,
            presorted,
            yi,
            len(classes),
            max_depth=config.max_depth,
            min_leaf=min_leaf,
            weight=weight,
            max_features=max_features,
            rng=rng,
        )
        total = imp.sum()
        return _tree_from(arrays), (imp / total if total > 0 else imp)

    with ThreadPoolExecutor(max_workers=max(1, config.n_jobs)) as pool:
        out = list(pool.map(one, seeds))
    importance = np.mean([imp for _, imp in out], axis=0)
    model = ForestModel(
        classes=classes,
        columns=columns,
        config=config,
        trees=[t for t, _ in out],
        seeds=seeds,
        max_features=max_features,
        importance=importance,
    )
    model.meta = {"rows": int(n), "seed": config.seed}
    return model


def _cross_entropy(proba, yi):
    return float(-np.mean(np.log(np.clip(proba[np.arange(len(yi)), yi], 1e-300, None))))


def train_boost(X, y, X_val=None, y_val=None, config: LearnerConfig = LearnerConfig(), columns=None):
    """Multi-class gradient boosting on softmax cross-entropy.

    Each round fits one regression tree per class to the gradient with
    Newton leaf weights ``-G / (H + lambda)``. Validation accuracy is
    checked after every round; training stops once it has not improved for
    ``early_stopping_rounds`` rounds and the model is cut back to the best
    round (earliest on ties).
    """
    X, columns = _check_xy(X, y, columns)
    classes, yi = _encode(y)
    K = len(classes)
    if K < 2:
        raise ValueError("boosting needs at least two classes in y")
    n = X.shape[0]
    es = config.early_stopping_rounds
    if es is not None:
        if X_val is None or len(X_val) == 0:
            raise ValueError("early stopping needs a non-empty validation set")
        X_val = np.ascontiguousarray(np.asarray(X_val, dtype=np.float64))
        index = {c: i for i, c in enumerate(classes)}
        yv = np.array([index.get(v, -1) for v in y_val], dtype=np.int64)
    min_leaf = 1 if config.min_leaf is None else config.min_leaf
    lr = config.learning_rate
    presorted = _engine.presort(X)
    onehot = np.zeros((n, K))
    onehot[np.arange(n), yi] = 1.0

    scores = np.zeros((n, K))
    val_scores = np.zeros((X_val.shape[0], K)) if es is not None else None
    rounds = []
    history = {"train_loss": [_cross_entropy(softmax(scores), yi)], "val_accuracy": []}
    best_round, best_acc = None, -1.0

    pool = _engine.thread_pool(config.n_jobs)
    try:
        for r in range(1, config.nrounds + 1):
            p = softmax(scores)
            arrays, leaf = _engine.grow_newton(
                X,
                presorted,
                p - onehot,
                p * (1.0 - p),
                max_depth=config.max_depth,
                min_leaf=min_leaf,
                lam=config.reg_lambda,
                pool=pool,
            )
            trees = []
            for k, a in enumerate(arrays):
                tree = _tree_from(a)
                scores[:, k] += lr * tree.value[leaf[:, k]]
                trees.append(tree)
                if es is not None:
                    val_scores[:, k] += lr * tree.value[tree.apply(X_val)]
            rounds.append(trees)
            history["train_loss"].append(_cross_entropy(softmax(scores), yi))
            if es is not None:
                acc = float(np.mean(np.argmax(val_scores, axis=1) == yv))
                history["val_accuracy"].append(acc)
                if acc > best_acc:
                    best_acc, best_round = acc, r
                if r - best_round >= es:
                    break
    finally:
        if pool is not None:
            pool.shutdown()

    model = BoostModel(
        classes=classes,
        columns=columns,
        config=config,
        rounds=rounds if best_round is None else rounds[:best_round],
        learning_rate=lr,
        rounds_used=len(rounds),
        best_validation_round=best_round,
        history=history,
    )
    model.meta = {"rows": int(n), "seed": config.seed, "validation_rows": 0 if es is None else int(X_val.shape[0])}
    return model


def train(X, y, config: LearnerConfig, columns=None, X_val=None, y_val=None):
    if config.kind == "tree":
        return train_tree(X, y, config, columns)
    if config.kind == "forest":
        return train_forest(X, y, config, columns)
    return train_boost(X, y, X_val, y_val, config, columns)


def predict(model, X, columns=None):
    return model.predict(X, columns)


def predict_proba(model, X, columns=None):
    return model.predict_proba(X, columns)
