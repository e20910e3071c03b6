"""Overall accuracy, Cohen's kappa, class-averaged F1 and the confusion matrix."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .core import CATEGORY_NAMES, N_CLASSES

F1Scope = Literal["present", "all"]


@dataclass(frozen=True)
class Evaluation:
    accuracy: float
    kappa: float
    macro_f1: float
    confusion: np.ndarray
    f1_scope: str = "present"

    @property
    def n(self) -> int:
        return int(self.confusion.sum())

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "accuracy": self.accuracy,
            "kappa": self.kappa,
            "macro_f1": self.macro_f1,
            "macro_f1_scope": self.f1_scope,
            "per_class_f1": dict(zip(CATEGORY_NAMES, per_class_f1(self.confusion).tolist())),
            "classes": list(CATEGORY_NAMES),
            "confusion_matrix": self.confusion.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def confusion_matrix(y_true, y_pred, n_classes: int = N_CLASSES) -> np.ndarray:
    y_true, y_pred = _check(y_true, y_pred, n_classes)
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


def per_class_f1(cm: np.ndarray) -> np.ndarray:
    tp = np.diag(cm).astype(float)
    pred_tot = cm.sum(axis=0)
    true_tot = cm.sum(axis=1)
    # 2PR/(P+R) == 2TP/(pred + true); 0/0 -> 0
    denom = (pred_tot + true_tot).astype(float)
    return np.divide(2 * tp, denom, out=np.zeros_like(tp), where=denom > 0)


def macro_f1_scope(cm: np.ndarray, mode: F1Scope = "present") -> float:
    f1 = per_class_f1(cm)
    if mode == "all":
        return float(f1.mean())
    if mode != "present":
        raise ValueError(f"unknown F1 scope {mode!r}")
    present = (cm.sum(axis=0) + cm.sum(axis=1)) > 0
    if not present.any():
        raise ValueError("no classes present")
    return float(f1[present].mean())


def cohen_kappa(cm: np.ndarray) -> float:
    n = cm.sum()
    p_o = np.trace(cm) / n
    p_e = float((cm.sum(axis=1).astype(float) * cm.sum(axis=0)).sum()) / (float(n) * n)
    if p_e == 1.0:
        # only reachable when every sample is one class in both vectors
        return 1.0 if p_o == 1.0 else 0.0
    return float((p_o - p_e) / (1.0 - p_e))


def evaluate(y_true, y_pred, f1_scope: F1Scope = "present", n_classes: int = N_CLASSES) -> Evaluation:
    cm = confusion_matrix(y_true, y_pred, n_classes)
    acc = float(np.trace(cm) / cm.sum())
    return Evaluation(acc, cohen_kappa(cm), macro_f1_scope(cm, f1_scope), cm, f1_scope)


def _check(y_true, y_pred, n_classes):
    y_true = np.asarray(y_true, dtype=np.int64).ravel()
    y_pred = np.asarray(y_pred, dtype=np.int64).ravel()
    if y_true.size != y_pred.size:
        raise ValueError(f"length mismatch: {y_true.size} true vs {y_pred.size} predicted")
    if y_true.size == 0:
        raise ValueError("cannot evaluate an empty label set")
    for arr in (y_true, y_pred):
        if (arr < 0).any() or (arr >= n_classes).any():
            raise ValueError(f"labels must lie in [0, {n_classes})")
    return y_true, y_pred


def format_confusion(cm: np.ndarray, names: Sequence[str] = CATEGORY_NAMES) -> str:
    """Aligned text table, rows = true class, columns = predicted class."""
    width = max(max(len(n) for n in names), len(str(int(cm.max()))) if cm.size else 1) + 1
    lines = [" " * width + "".join(n.rjust(width) for n in names)]
    for name, row in zip(names, cm):
        lines.append(name.rjust(width) + "".join(str(int(v)).rjust(width) for v in row))
    return "\n".join(lines) + "\n"
