"""The three probability-emitting branches.

``I`` (image) and ``T`` (time-sequential) are gradient-boosted trees over
hand-crafted descriptors; they stand in for the convolutional image and
temporal networks. ``M`` is the boosted classifier over the concatenated
statistical, user-activity and region-graph features.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Protocol, Union

import numpy as np

from . import gbdt
from .core import DAYS_PER_WEEK, HOURS_PER_DAY, N_CLASSES, TemporalTensor
from .features import MULTIDIM_DIM

IMAGE_SIZE = 100
IMAGE_BINS = 8
IMAGE_DIM = 6 + 3 * IMAGE_BINS + 1
TEMPORAL_DIM = DAYS_PER_WEEK * HOURS_PER_DAY + HOURS_PER_DAY + DAYS_PER_WEEK
LUMA = np.array([0.299, 0.587, 0.114])

BRANCH_KINDS = ("I", "T", "M")
BRANCH_DIMS = {"I": IMAGE_DIM, "T": TEMPORAL_DIM, "M": MULTIDIM_DIM}
BRANCH_FORMAT = "mdfl-branch"
BRANCH_VERSION = 1


class ImageError(ValueError):
    pass


class ProbabilityModel(Protocol):
    def predict_proba(self, X) -> np.ndarray: ...


def load_image(path: Union[str, os.PathLike]) -> np.ndarray:
    from PIL import Image, UnidentifiedImageError

    try:
        with Image.open(path) as im:
            if im.mode != "RGB":
                raise ImageError(f"{path}: expected 8-bit RGB, got mode {im.mode}")
            arr = np.asarray(im, dtype=np.uint8)
    except (UnidentifiedImageError, OSError) as e:
        raise ImageError(f"{path}: cannot decode image ({e})") from None
    return arr


def extract_image_feature(image: np.ndarray) -> np.ndarray:
    """31-dim descriptor: channel means, channel stds, 8-bin channel histograms,
    mean grayscale gradient magnitude."""
    img = np.asarray(image)
    if img.shape != (IMAGE_SIZE, IMAGE_SIZE, 3):
        raise ImageError(f"expected {IMAGE_SIZE}x{IMAGE_SIZE}x3 image, got {img.shape}")
    if img.dtype != np.uint8:
        raise ImageError("expected 8-bit channels")
    px = img.reshape(-1, 3).astype(float)
    out = np.empty(IMAGE_DIM)
    out[0:3] = px.mean(axis=0)
    out[3:6] = px.std(axis=0)
    for ch in range(3):
        hist = np.bincount(img[..., ch].ravel() // (256 // IMAGE_BINS), minlength=IMAGE_BINS)
        out[6 + ch * IMAGE_BINS:6 + (ch + 1) * IMAGE_BINS] = hist / px.shape[0]
    gray = img.astype(float) @ LUMA
    gy, gx = np.gradient(gray)
    out[-1] = np.hypot(gx, gy).mean()
    return out


def extract_temporal_feature(tensor: Union[TemporalTensor, np.ndarray]) -> np.ndarray:
    """199-dim: week-averaged weekday x hour matrix, hour marginal, weekday marginal."""
    counts = np.asarray(getattr(tensor, "counts", tensor), dtype=float)
    out = np.zeros(TEMPORAL_DIM)
    total = counts.sum()
    if total == 0:
        return out
    n_day_hour = DAYS_PER_WEEK * HOURS_PER_DAY
    out[:n_day_hour] = counts.mean(axis=0).ravel()
    out[n_day_hour:n_day_hour + HOURS_PER_DAY] = counts.sum(axis=(0, 1)) / total
    out[n_day_hour + HOURS_PER_DAY:] = counts.sum(axis=(0, 2)) / total
    return out


@dataclass
class BranchModel:
    kind: str
    model: gbdt.GbdtModel

    def __post_init__(self):
        if self.kind not in BRANCH_KINDS:
            raise ValueError(f"unknown branch kind {self.kind!r}")
        if self.model.n_features != BRANCH_DIMS[self.kind]:
            raise ValueError(
                f"branch {self.kind} expects {BRANCH_DIMS[self.kind]} features, "
                f"inner model has {self.model.n_features}")

    @property
    def feature_dim(self) -> int:
        return BRANCH_DIMS[self.kind]

    def predict_proba(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.feature_dim:
            raise ValueError(f"branch {self.kind} expects {self.feature_dim} features, got {X.shape[-1]}")
        return self.model.predict_proba(X)

    def to_dict(self) -> dict:
        return {"format": BRANCH_FORMAT, "version": BRANCH_VERSION, "kind": self.kind,
                "feature_dim": self.feature_dim, "gbdt": self.model.to_dict()}

    def save(self, path: Union[str, os.PathLike]) -> None:
        head = {"format": BRANCH_FORMAT, "version": BRANCH_VERSION, "kind": self.kind,
                "feature_dim": self.feature_dim}
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(head)[:-1] + ',\n"gbdt": ' + gbdt.dumps(self.model) + "}\n")

    @classmethod
    def load(cls, path: Union[str, os.PathLike]) -> "BranchModel":
        with open(path, "rb") as fh:
            try:
                d = json.loads(fh.read())
            except (json.JSONDecodeError, UnicodeDecodeError) as e:
                raise gbdt.ModelFormatError(f"corrupt branch file {path}: {e}") from None
        if not isinstance(d, dict) or d.get("format") != BRANCH_FORMAT:
            raise gbdt.ModelFormatError(f"{path}: not a branch model file")
        if d.get("version") != BRANCH_VERSION:
            raise gbdt.ModelFormatError(f"{path}: unsupported branch version {d.get('version')!r}")
        try:
            return cls(d["kind"], gbdt.GbdtModel.from_dict(d["gbdt"]))
        except (KeyError, ValueError) as e:
            raise gbdt.ModelFormatError(f"{path}: {e}") from None


def train_branch(kind: str, features, labels, params: gbdt.GbdtParams = gbdt.GbdtParams(),
                 threads: int = 1) -> BranchModel:
    features = np.asarray(features, dtype=float)
    if kind not in BRANCH_KINDS:
        raise ValueError(f"unknown branch kind {kind!r}")
    if features.ndim != 2 or features.shape[1] != BRANCH_DIMS[kind]:
        raise ValueError(f"branch {kind} expects N x {BRANCH_DIMS[kind]} features, got {features.shape}")
    return BranchModel(kind, gbdt.fit(features, labels, params, n_classes=N_CLASSES, threads=threads))


def predict_branch(model: ProbabilityModel, feature) -> np.ndarray:
    return model.predict_proba(feature)
