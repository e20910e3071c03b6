"""Stacked decision fusion over branch probabilities.

Out-of-fold branch probabilities (order I, T, M; 27 columns) train the
fusion head. Branch models used at inference are refit on every training
region. Feature sources whose values depend on training labels (the
multi-dimension block) are passed as callables taking the held-out fold id,
so each fold's rows are computed without that fold's labels.
"""

from __future__ import annotations

import json
import os
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping, Optional, Union

import numpy as np

from . import gbdt
from .branches import BRANCH_KINDS, BranchModel, ProbabilityModel, train_branch
from .core import N_CLASSES
from .ingest import DatasetIndex

FUSION_DIM = len(BRANCH_KINDS) * N_CLASSES
FEATURE_LAYOUT_VERSION = 1
FUSED_FORMAT = "mdfl-fused"
FUSED_VERSION = 1

FeatureSource = Union[np.ndarray, Callable[[Optional[int]], np.ndarray]]
Trainer = Callable[[str, np.ndarray, np.ndarray, gbdt.GbdtParams, int], ProbabilityModel]


class FusionError(ValueError):
    pass


def gbdt_trainer(kind, X, y, params, threads=1) -> BranchModel:
    return train_branch(kind, X, y, params, threads=threads)


def derive_seed(root: int, *path: int) -> int:
    return int(np.random.SeedSequence([root, *path]).generate_state(1)[0])


@dataclass
class FusedPrediction:
    labels: np.ndarray
    proba: np.ndarray
    branch_proba: dict


@dataclass
class FusedModel:
    branches: dict
    head: gbdt.GbdtModel
    metadata: dict = field(default_factory=dict)
    oof: Optional[np.ndarray] = field(default=None, repr=False)

    def predict(self, inputs: Mapping[str, np.ndarray]) -> FusedPrediction:
        return predict_fused(self, inputs)

    def save(self, directory: Union[str, os.PathLike]) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        for kind in BRANCH_KINDS:
            branch = self.branches[kind]
            if not isinstance(branch, BranchModel):
                raise TypeError(f"branch {kind} is not a serializable BranchModel")
            branch.save(d / f"branch_{kind}.json")
        gbdt.save(self.head, d / "fusion.json")
        meta = dict(self.metadata)
        meta.update({
            "format": FUSED_FORMAT,
            "version": FUSED_VERSION,
            "branch_order": list(BRANCH_KINDS),
            "fusion_dim": FUSION_DIM,
            "files": {**{k: f"branch_{k}.json" for k in BRANCH_KINDS}, "fusion": "fusion.json"},
        })
        (d / "metadata.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, directory: Union[str, os.PathLike]) -> "FusedModel":
        d = Path(directory)
        try:
            meta = json.loads((d / "metadata.json").read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise gbdt.ModelFormatError(f"{d}: no metadata.json") from None
        except json.JSONDecodeError as e:
            raise gbdt.ModelFormatError(f"{d}: corrupt metadata ({e})") from None
        if meta.get("format") != FUSED_FORMAT or meta.get("version") != FUSED_VERSION:
            raise gbdt.ModelFormatError(f"{d}: not a fused model directory of version {FUSED_VERSION}")
        if meta.get("branch_order") != list(BRANCH_KINDS):
            raise gbdt.ModelFormatError(f"{d}: unexpected branch order {meta.get('branch_order')}")
        try:
            branches = {k: BranchModel.load(d / f"branch_{k}.json") for k in BRANCH_KINDS}
            head = gbdt.load(d / "fusion.json")
        except FileNotFoundError as e:
            raise gbdt.ModelFormatError(f"{d}: missing model file {e.filename}") from None
        if head.n_features != FUSION_DIM:
            raise gbdt.ModelFormatError(f"fusion head expects {head.n_features} inputs, not {FUSION_DIM}")
        for k in ("format", "version", "branch_order", "fusion_dim", "files"):
            meta.pop(k, None)
        return cls(branches, head, meta)


def _resolve(source: FeatureSource, fold: Optional[int], n: int, kind: str) -> np.ndarray:
    X = source(fold) if callable(source) else source
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != n:
        raise FusionError(f"branch {kind} features must have {n} rows, got shape {X.shape}")
    return X


def _params_for(params, kind):
    if params is None:
        return gbdt.GbdtParams()
    if isinstance(params, gbdt.GbdtParams):
        return params
    return params.get(kind, gbdt.GbdtParams())


def train_fused(
    dataset: DatasetIndex,
    features: Mapping[str, FeatureSource],
    params=None,
    k_folds: Optional[int] = None,
    trainers: Optional[Mapping[str, Trainer]] = None,
    fusion_params: Optional[gbdt.GbdtParams] = None,
    seed: int = 0,
    strict: bool = False,
    threads: int = 1,
) -> FusedModel:
    """Fit branch models out-of-fold, the fusion head on the OOF matrix, then
    refit the branches on all training regions.

    ``features[kind]`` is an ``N x D`` array aligned with ``dataset.training``
    or a callable ``fold -> array``; the callable receives the held-out fold
    id during the OOF passes and ``None`` for the final refit. ``params`` is
    one :class:`~mdfl.gbdt.GbdtParams` or a mapping per branch kind.
    """
    missing = [k for k in BRANCH_KINDS if k not in features]
    if missing:
        raise FusionError(f"missing branch features: {', '.join(missing)}")
    if k_folds is not None and k_folds != dataset.k_folds:
        dataset = dataset.with_folds(k_folds, seed)
    K = dataset.k_folds
    if K < 2:
        raise FusionError("k_folds must be >= 2")
    y = dataset.label_array()
    folds = dataset.fold_array()
    n = y.size
    if n == 0:
        raise FusionError("no labeled training regions")
    trainers = dict(trainers or {})
    fusion_params = fusion_params or gbdt.GbdtParams()

    oof = np.zeros((n, FUSION_DIM))
    present = set(np.unique(y).tolist())
    for f in range(K):
        held = folds == f
        if not held.any():
            raise FusionError(f"fold {f} is empty")
        train = ~held
        lacking = present - set(np.unique(y[train]).tolist())
        if lacking:
            msg = f"fold {f}: training part lacks classes {sorted(lacking)}"
            if strict:
                raise FusionError(msg)
            warnings.warn(msg, stacklevel=2)
        for b, kind in enumerate(BRANCH_KINDS):
            X = _resolve(features[kind], f, n, kind)
            p = replace(_params_for(params, kind), seed=derive_seed(seed, b, f + 1))
            model = trainers.get(kind, gbdt_trainer)(kind, X[train], y[train], p, threads)
            oof[held, b * N_CLASSES:(b + 1) * N_CLASSES] = model.predict_proba(X[held])

    head = gbdt.fit(oof, y, replace(fusion_params, seed=derive_seed(seed, len(BRANCH_KINDS))),
                    n_classes=N_CLASSES, threads=threads)
    branches = {}
    for b, kind in enumerate(BRANCH_KINDS):
        X = _resolve(features[kind], None, n, kind)
        p = replace(_params_for(params, kind), seed=derive_seed(seed, b, 0))
        branches[kind] = trainers.get(kind, gbdt_trainer)(kind, X, y, p, threads)

    meta = {
        "k_folds": K,
        "seed": seed,
        "feature_layout_version": FEATURE_LAYOUT_VERSION,
        "n_training": int(n),
    }
    return FusedModel(branches, head, meta, oof)


def predict_fused(model: FusedModel, inputs: Mapping[str, np.ndarray]) -> FusedPrediction:
    """Fuse branch probabilities. ``inputs[kind]`` is one feature vector or an
    ``N x D`` matrix; returns labels, fused probabilities and per-branch ones."""
    missing = [k for k in BRANCH_KINDS if inputs.get(k) is None]
    if missing:
        raise FusionError(f"missing input modality for branch {', '.join(missing)}")
    single = np.asarray(inputs[BRANCH_KINDS[0]]).ndim == 1
    per_branch = {}
    for kind in BRANCH_KINDS:
        X = np.atleast_2d(np.asarray(inputs[kind], dtype=float))
        per_branch[kind] = np.atleast_2d(model.branches[kind].predict_proba(X))
    sizes = {v.shape[0] for v in per_branch.values()}
    if len(sizes) != 1:
        raise FusionError("branch inputs have different row counts")
    stacked = np.hstack([per_branch[k] for k in BRANCH_KINDS])
    proba = model.head.predict_proba(stacked)
    labels = np.argmax(proba, axis=1)
    if single:
        return FusedPrediction(labels[0], proba[0], {k: v[0] for k, v in per_branch.items()})
    return FusedPrediction(labels, proba, per_branch)
