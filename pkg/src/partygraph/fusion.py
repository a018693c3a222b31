"""Embedding fusion and the final classifiers (random forest, logistic baseline)."""

from __future__ import annotations

import math
import pickle
from collections.abc import Sequence
from dataclasses import asdict, dataclass

import numpy as np
from sklearn.ensemble import RandomForestClassifier

from .artifacts import MODEL_MAGIC, EmbeddingMatrix, read_container, write_container
from .labels import ClassRegistry, LabelDistribution
from .records import FormatError


@dataclass
class FusedFeatures:
    matrix: np.ndarray
    mask: np.ndarray
    signals: tuple[str, ...]
    dims: tuple[int, ...]
    node_ids: tuple[str, ...]

    def block(self, signal: str) -> np.ndarray:
        k = self.signals.index(signal)
        start = sum(self.dims[:k])
        return self.matrix[:, start:start + self.dims[k]]


def fuse(embeddings: Sequence[EmbeddingMatrix], node_ids: Sequence[str]) -> FusedFeatures:
    """Concatenate per-signal embeddings over ``node_ids`` in the given order.

    Users a signal does not cover get an all-zero block and a False mask entry.
    """
    signals = [e.signal for e in embeddings]
    if len(set(signals)) != len(signals):
        dup = next(s for s in signals if signals.count(s) > 1)
        raise ValueError(f"duplicate signal {dup!r} in fusion input")
    node_ids = tuple(node_ids)
    index = {u: i for i, u in enumerate(node_ids)}
    n = len(node_ids)
    dims = tuple(e.dim for e in embeddings)
    out = np.zeros((n, sum(dims)))
    mask = np.zeros((n, len(embeddings)), dtype=bool)
    col = 0
    for k, e in enumerate(embeddings):
        for r, uid in enumerate(e.node_ids):
            i = index.get(uid)
            if i is not None and e.present[r]:
                out[i, col:col + e.dim] = e.vectors[r]
                mask[i, k] = True
        col += e.dim
    return FusedFeatures(out, mask, tuple(signals), dims, node_ids)


@dataclass(frozen=True)
class ForestConfig:
    trees: int = 100
    max_depth: int | None = None
    min_samples_split: int = 2
    max_features: str | int = "sqrt"
    bootstrap: bool = True
    criterion: str = "gini"
    seed: int = 0


class ForestModel:
    """Random forest whose output is per-class tree vote fractions."""

    def __init__(self, estimator: RandomForestClassifier, classes: ClassRegistry, config: ForestConfig):
        self.estimator = estimator
        self.classes = classes
        self.config = config

    def votes(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        k = len(self.classes)
        counts = np.zeros((features.shape[0], k))
        cols = self.estimator.classes_.astype(np.int64)
        rows = np.arange(features.shape[0])
        for tree in self.estimator.estimators_:
            winner = cols[np.argmax(tree.predict_proba(features), axis=1)]
            counts[rows, winner] += 1
        return counts / len(self.estimator.estimators_)

    def save(self, path) -> None:
        header = {"model": "forest", "classes": list(self.classes.names), "config": asdict(self.config)}
        write_container(path, MODEL_MAGIC, header, {}, pickle.dumps(self.estimator))

    @staticmethod
    def load(path) -> ForestModel:
        header, _, blob = read_container(path, MODEL_MAGIC)
        if header.get("model") != "forest":
            raise FormatError(f"{path}: not a forest model")
        return ForestModel(pickle.loads(blob), ClassRegistry(header["classes"]), ForestConfig(**header["config"]))


def _canonical_order(features: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Row order determined by row content alone (lexicographic on features, then label)."""
    # np.lexsort treats the last key as primary
    keys = [labels] + [features[:, j] for j in range(features.shape[1] - 1, -1, -1)]
    return np.lexsort(keys)


def _check_labels(labels: np.ndarray, features: np.ndarray) -> None:
    if features.shape[0] != labels.shape[0]:
        raise ValueError(f"{features.shape[0]} feature rows but {labels.shape[0]} labels")
    if len(np.unique(labels)) < 2:
        raise ValueError("training labels must contain at least 2 classes")


def forest_train(
    features: np.ndarray,
    labels: np.ndarray,
    classes: ClassRegistry,
    config: ForestConfig = ForestConfig(),
    threads: int = 1,
) -> ForestModel:
    """Fit on rows in canonical order so the model ignores input row order.

    Each tree's bootstrap stream is derived from ``config.seed`` and the tree
    number only.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    _check_labels(labels, features)
    order = _canonical_order(features, labels)
    est = RandomForestClassifier(
        n_estimators=config.trees,
        criterion=config.criterion,
        max_depth=config.max_depth,
        min_samples_split=config.min_samples_split,
        max_features=config.max_features,
        bootstrap=config.bootstrap,
        random_state=config.seed,
        n_jobs=threads,
    )
    est.fit(features[order], labels[order])
    return ForestModel(est, classes, config)


def forest_predict(model: ForestModel, features: np.ndarray, node_ids=None) -> LabelDistribution:
    return LabelDistribution(np.clip(model.votes(features), 0.0, 1.0), model.classes, node_ids)


class LogisticModel:
    """Multinomial logistic regression on standardized features."""

    def __init__(self, weights, bias, mean, scale, classes: ClassRegistry, iterations: int):
        self.weights, self.bias = weights, bias
        self.mean, self.scale = mean, scale
        self.classes = classes
        self.iterations = iterations

    def proba(self, features: np.ndarray) -> np.ndarray:
        z = ((np.asarray(features, dtype=np.float64) - self.mean) / self.scale) @ self.weights + self.bias
        z -= z.max(axis=1, keepdims=True)
        p = np.exp(z)
        return p / p.sum(axis=1, keepdims=True)


def logistic_train(
    features: np.ndarray,
    labels: np.ndarray,
    classes: ClassRegistry,
    l2: float = 1e-4,
    tol: float = 1e-6,
    max_iter: int = 5000,
) -> LogisticModel:
    """Full-batch gradient descent with step ``1/L`` until the gradient norm drops below ``tol``."""
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    _check_labels(y, x)
    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    scale[scale == 0] = 1.0
    xs = (x - mean) / scale
    m, d = xs.shape
    k = len(classes)
    onehot = np.zeros((m, k))
    onehot[np.arange(m), y] = 1.0
    # Lipschitz bound of the mean softmax loss gradient (with intercept column)
    sigma = np.linalg.norm(np.hstack([xs, np.ones((m, 1))]), 2) if m else 0.0
    step = 1.0 / (0.5 * sigma * sigma / max(m, 1) + l2)
    w = np.zeros((d, k))
    b = np.zeros(k)
    it = 0
    for it in range(1, max_iter + 1):
        z = xs @ w + b
        z -= z.max(axis=1, keepdims=True)
        p = np.exp(z)
        p /= p.sum(axis=1, keepdims=True)
        r = (p - onehot) / m
        gw = xs.T @ r + l2 * w
        gb = r.sum(axis=0)
        if math.sqrt(float((gw * gw).sum() + (gb * gb).sum())) < tol:
            break
        w -= step * gw
        b -= step * gb
    return LogisticModel(w, b, mean, scale, classes, it)


def logistic_predict(model: LogisticModel, features: np.ndarray, node_ids=None) -> LabelDistribution:
    p = model.proba(features)
    # softmax rows can exceed 1 by an ulp
    p = np.clip(p / p.sum(axis=1, keepdims=True), 0.0, 1.0)
    return LabelDistribution(p, model.classes, node_ids)
