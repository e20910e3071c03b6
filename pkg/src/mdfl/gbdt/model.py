from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from ..core import N_CLASSES
from . import _kernels

MODEL_FORMAT = "mdfl-gbdt"
MODEL_VERSION = 1
LEAF_EPS = 1e-9


class ModelFormatError(ValueError):
    pass


@dataclass(frozen=True)
class GbdtParams:
    n_rounds: int = 100
    learning_rate: float = 0.1
    max_depth: int = 4
    min_samples_leaf: int = 5
    min_gain: float = 1e-6
    subsample: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_rounds < 1:
            raise ValueError("n_rounds must be >= 1")
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must be in (0, 1]")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if not 0 < self.subsample <= 1:
            raise ValueError("subsample must be in (0, 1]")


@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @classmethod
    def from_kernel(cls, feature, threshold, left, right, value) -> "Tree":
        # node ids are allocated contiguously, so used nodes form a prefix
        used = max(int(left.max()), int(right.max())) + 1 if (feature >= 0).any() else 1
        return cls(feature[:used].copy(), threshold[:used].copy(), left[:used].copy(),
                   right[:used].copy(), value[:used].copy())

    def __len__(self):
        return self.feature.size

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict, n_features: int) -> "Tree":
        try:
            t = cls(
                np.asarray(d["feature"], dtype=np.int64),
                np.asarray(d["threshold"], dtype=float),
                np.asarray(d["left"], dtype=np.int64),
                np.asarray(d["right"], dtype=np.int64),
                np.asarray(d["value"], dtype=float),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ModelFormatError(f"bad tree record: {e}") from None
        n = t.feature.size
        if n == 0 or any(a.shape != (n,) for a in (t.threshold, t.left, t.right, t.value)):
            raise ModelFormatError("tree arrays have inconsistent lengths")
        split = t.feature >= 0
        if (t.feature >= n_features).any():
            raise ModelFormatError("split feature out of range")
        for child in (t.left, t.right):
            if (split & ((child <= 0) | (child >= n))).any():
                raise ModelFormatError("child index out of range")
        return t

    def equals(self, other: "Tree") -> bool:
        return all(np.array_equal(a, b) for a, b in zip(
            (self.feature, self.threshold, self.left, self.right, self.value),
            (other.feature, other.threshold, other.left, other.right, other.value)))


@dataclass(eq=False)
class GbdtModel:
    """Multiclass boosted tree ensemble: ``rounds[r][c]`` is round r's tree for class c."""

    n_classes: int
    n_features: int
    base_scores: np.ndarray
    rounds: list = field(default_factory=list)
    learning_rate: float = 0.1
    loss_history: list = field(default_factory=list)
    _packed: Optional[tuple] = field(default=None, repr=False)

    @classmethod
    def empty(cls, n_classes: int = N_CLASSES, n_features: int = 1) -> "GbdtModel":
        return cls(n_classes, n_features, np.zeros(n_classes))

    @property
    def n_rounds(self) -> int:
        return len(self.rounds)

    def __eq__(self, other):
        if not isinstance(other, GbdtModel):
            return NotImplemented
        return (
            self.n_classes == other.n_classes
            and self.n_features == other.n_features
            and self.learning_rate == other.learning_rate
            and np.array_equal(self.base_scores, other.base_scores)
            and len(self.rounds) == len(other.rounds)
            and all(a.equals(b) for ra, rb in zip(self.rounds, other.rounds) for a, b in zip(ra, rb))
        )

    def _pack(self):
        if self._packed is None:
            trees = [t for rnd in self.rounds for t in rnd]
            width = max((len(t) for t in trees), default=1)
            n = len(trees)
            feature = np.full((n, width), -1, dtype=np.int64)
            threshold = np.zeros((n, width))
            left = np.full((n, width), -1, dtype=np.int64)
            right = np.full((n, width), -1, dtype=np.int64)
            value = np.zeros((n, width))
            for i, t in enumerate(trees):
                k = len(t)
                feature[i, :k] = t.feature
                threshold[i, :k] = t.threshold
                left[i, :k] = t.left
                right[i, :k] = t.right
                value[i, :k] = t.value
            tree_class = np.tile(np.arange(self.n_classes, dtype=np.int64), len(self.rounds))
            self._packed = (feature, threshold, left, right, value, tree_class)
        return self._packed

    def decision_function(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X2 = np.atleast_2d(X)
        if X2.ndim != 2 or X2.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got shape {X.shape}")
        scores = _kernels.predict_scores(np.ascontiguousarray(X2), self.base_scores.astype(float),
                                         *self._pack())
        return scores[0] if single else scores

    def predict_proba(self, X) -> np.ndarray:
        return softmax(self.decision_function(X))

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=-1)

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "n_classes": self.n_classes,
            "n_features": self.n_features,
            "learning_rate": self.learning_rate,
            "base_scores": self.base_scores.tolist(),
            "rounds": [[t.to_dict() for t in rnd] for rnd in self.rounds],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GbdtModel":
        if not isinstance(d, dict) or d.get("format") != MODEL_FORMAT:
            raise ModelFormatError("not a GBDT model document")
        if d.get("version") != MODEL_VERSION:
            raise ModelFormatError(f"unsupported model version {d.get('version')!r}")
        try:
            n_classes = int(d["n_classes"])
            n_features = int(d["n_features"])
            base = np.asarray(d["base_scores"], dtype=float)
            rounds = [[Tree.from_dict(t, n_features) for t in rnd] for rnd in d["rounds"]]
            lr = float(d["learning_rate"])
        except (KeyError, TypeError, ValueError) as e:
            raise ModelFormatError(f"malformed model document: {e}") from None
        if base.shape != (n_classes,) or any(len(rnd) != n_classes for rnd in rounds):
            raise ModelFormatError("class count mismatch")
        return cls(n_classes, n_features, base, rounds, lr)


def softmax(scores: np.ndarray) -> np.ndarray:
    z = scores - np.max(scores, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_loss(scores: np.ndarray, y: np.ndarray) -> float:
    """Mean multiclass cross-entropy of raw scores."""
    m = scores.max(axis=1, keepdims=True)
    lse = np.log(np.exp(scores - m).sum(axis=1)) + m[:, 0]
    return float(np.mean(lse - scores[np.arange(len(y)), y]))


def softmax_grad_hess(scores: np.ndarray, y: np.ndarray):
    """Probabilities, gradient ``p - onehot`` and diagonal hessian ``p(1-p)``."""
    p = softmax(scores)
    g = p.copy()
    g[np.arange(len(y)), y] -= 1.0
    return p, g, p * (1.0 - p)


def _validate(X, y, n_classes):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("X must be a non-empty 2-D matrix")
    if X.shape[1] == 0:
        raise ValueError("X has no features")
    if not np.isfinite(X).all():
        raise ValueError("X contains non-finite values")
    if y.shape != (X.shape[0],):
        raise ValueError("y length must match X rows")
    if not np.issubdtype(y.dtype, np.integer):
        if not np.all(np.equal(np.mod(y, 1), 0)):
            raise ValueError("labels must be integers")
    y = y.astype(np.int64)
    if (y < 0).any() or (y >= n_classes).any():
        raise ValueError(f"labels must lie in [0, {n_classes})")
    return np.ascontiguousarray(X), y


def fit(X, y, params: GbdtParams = GbdtParams(), n_classes: int = N_CLASSES,
        threads: int = 1) -> GbdtModel:
    """Boost one regression tree per class per round under the softmax objective.

    Class trees within a round are independent and may be grown on up to
    ``threads`` threads; the result does not depend on the thread count.
    """
    X, y = _validate(X, y, n_classes)
    n = X.shape[0]
    order = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T).astype(np.int64)
    xs = np.ascontiguousarray(np.take_along_axis(X, order.T, axis=0).T)
    base = np.zeros(n_classes)
    scores = np.tile(base, (n, 1))
    rng = np.random.default_rng(params.seed)
    model = GbdtModel(n_classes, X.shape[1], base, learning_rate=params.learning_rate)
    model.loss_history.append(log_loss(scores, y))

    def grow(args):
        gc, hc, w = args
        return _kernels.build_tree(X, order, xs, gc, hc, w, params.max_depth, params.min_samples_leaf,
                                   params.min_gain, params.learning_rate, LEAF_EPS)

    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for _ in range(params.n_rounds):
            _, g, h = softmax_grad_hess(scores, y)
            if params.subsample < 1.0:
                w = (rng.random(n) < params.subsample).astype(float)
                if not w.any():
                    w[rng.integers(n)] = 1.0
                g = g * w[:, None]
                h = h * w[:, None]
            else:
                w = np.ones(n)
            jobs = [(np.ascontiguousarray(g[:, c]), np.ascontiguousarray(h[:, c]), w)
                    for c in range(n_classes)]
            results = list(pool.map(grow, jobs)) if pool else [grow(j) for j in jobs]
            rnd = []
            for c, (feature, threshold, left, right, value, node_of) in enumerate(results):
                scores[:, c] += value[node_of]
                rnd.append(Tree.from_kernel(feature, threshold, left, right, value))
            model.rounds.append(rnd)
            model.loss_history.append(log_loss(scores, y))
    finally:
        if pool:
            pool.shutdown()
    return model


def predict_proba(model: GbdtModel, x) -> np.ndarray:
    return model.predict_proba(x)


def dumps(model: GbdtModel) -> str:
    """Versioned JSON: header fields one per line, then one line per boosting round."""
    d = model.to_dict()
    rounds = d.pop("rounds")
    head = json.dumps(d, indent=1)[:-2]  # drop the closing "\n}"
    body = ",\n".join("  " + json.dumps(rnd, separators=(",", ":")) for rnd in rounds)
    return f'{head},\n "rounds": [\n{body}\n ]\n}}\n'


def loads(text: Union[str, bytes]) -> GbdtModel:
    try:
        d = json.loads(text)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ModelFormatError(f"corrupt model file: {e}") from None
    return GbdtModel.from_dict(d)


def save(model: GbdtModel, path: Union[str, os.PathLike]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(model))


def load(path: Union[str, os.PathLike]) -> GbdtModel:
    with open(path, "rb") as fh:
        return loads(fh.read())
