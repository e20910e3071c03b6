"""Multiclass gradient-boosted regression trees with exact greedy splits."""

from ._kernels import BACKEND
from .model import (
    GbdtModel,
    GbdtParams,
    ModelFormatError,
    Tree,
    dumps,
    fit,
    load,
    loads,
    log_loss,
    predict_proba,
    save,
    softmax,
    softmax_grad_hess,
)

__all__ = [
    "BACKEND",
    "GbdtModel",
    "GbdtParams",
    "ModelFormatError",
    "Tree",
    "dumps",
    "fit",
    "load",
    "loads",
    "log_loss",
    "predict_proba",
    "save",
    "softmax",
    "softmax_grad_hess",
]
