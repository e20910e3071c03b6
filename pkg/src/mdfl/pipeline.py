"""Dataset-level feature computation and the end-to-end train/predict flow."""

from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import gbdt
from .branches import BRANCH_KINDS, extract_image_feature, extract_temporal_feature, load_image
from .core import CATEGORY_NAMES, N_CLASSES, RegionRecord, VisitLog, category_index, category_name
from .features import (
    UserIndex,
    build_user_index,
    concat_multidim,
    extract_region_graph,
    extract_statistical,
    extract_user_activity,
    summarize_log,
)
from .fusion import FusedModel, FusedPrediction, predict_fused, train_fused
from .ingest import DatasetError, DatasetIndex, build_temporal_tensor, read_visit_log
from .metrics import Evaluation, evaluate


class ModalityError(DatasetError):
    pass


def _pmap(fn: Callable, items: Sequence, threads: int) -> list:
    if threads <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


class RegionFeatures:
    """Lazily computed per-region features for one dataset.

    Label-free features (statistics, temporal, image) are computed once.
    User indexes and multi-dimension matrices are cached per held-out fold;
    ``exclude_fold=None`` means every training region is indexed.
    """

    def __init__(self, dataset: DatasetIndex, threads: int = 1):
        self.dataset = dataset
        self.threads = threads
        self._by_id = {r.region_id: r for r in dataset.records}
        logs = _pmap(self._read_log, dataset.records, threads)
        self.logs: dict[str, VisitLog] = {r.region_id: lg for r, lg in zip(dataset.records, logs)}
        self.stat = {rid: extract_statistical(lg) for rid, lg in self.logs.items()}
        self._summaries = {r.region_id: summarize_log(self.logs[r.region_id]) for r in dataset.training}
        self._index: dict = {}
        self._multidim: dict = {}
        self._image: dict = {}

    def _read_log(self, record: RegionRecord) -> VisitLog:
        path = self.dataset.resolve(record.visit_path)
        if not path.is_file():
            raise ModalityError(f"region {record.region_id}: missing visit file {record.visit_path}")
        return read_visit_log(path, self.dataset.window, record.region_id)

    def records(self, which: str = "training") -> tuple[RegionRecord, ...]:
        return {"training": self.dataset.training, "test": self.dataset.test,
                "all": self.dataset.records}[which]

    def user_index(self, exclude_fold: Optional[int] = None) -> UserIndex:
        if exclude_fold not in self._index:
            folds = self.dataset.folds
            recs = [r for r in self.dataset.training
                    if exclude_fold is None or folds[r.region_id] != exclude_fold]
            self._index[exclude_fold] = build_user_index(recs, self.logs, self._summaries)
        return self._index[exclude_fold]

    def stat_matrix(self, records: Sequence[RegionRecord]) -> np.ndarray:
        return np.array([self.stat[r.region_id] for r in records]).reshape(len(records), -1)

    def activity_matrix(self, records, exclude_fold: Optional[int] = None) -> np.ndarray:
        index = self.user_index(exclude_fold)
        return np.array([extract_user_activity(self.logs[r.region_id], index, r.region_id)
                         for r in records]).reshape(len(records), -1)

    def graph_matrix(self, records, exclude_fold: Optional[int] = None) -> np.ndarray:
        index = self.user_index(exclude_fold)
        return np.array([extract_region_graph(self.logs[r.region_id], index, self.stat, r.region_id)
                         for r in records]).reshape(len(records), -1)

    def multidim_matrix(self, records: Sequence[RegionRecord],
                        exclude_fold: Optional[int] = None) -> np.ndarray:
        key = (exclude_fold, tuple(r.region_id for r in records))
        if key not in self._multidim:
            index = self.user_index(exclude_fold)

            def row(r):
                lg = self.logs[r.region_id]
                return concat_multidim(self.stat[r.region_id],
                                       extract_user_activity(lg, index, r.region_id),
                                       extract_region_graph(lg, index, self.stat, r.region_id))

            rows = _pmap(row, records, self.threads)
            self._multidim[key] = np.array(rows).reshape(len(records), -1)
        return self._multidim[key]

    def temporal_matrix(self, records: Sequence[RegionRecord]) -> np.ndarray:
        w = self.dataset.window
        return np.array([extract_temporal_feature(build_temporal_tensor(self.logs[r.region_id], w))
                         for r in records]).reshape(len(records), -1)

    def _image_row(self, r: RegionRecord) -> np.ndarray:
        if r.region_id not in self._image:
            if not r.image_path:
                raise ModalityError(f"region {r.region_id}: no image in manifest (image branch)")
            path = self.dataset.resolve(r.image_path)
            if not path.is_file():
                raise ModalityError(f"region {r.region_id}: missing image file {r.image_path}")
            self._image[r.region_id] = extract_image_feature(load_image(path))
        return self._image[r.region_id]

    def image_matrix(self, records: Sequence[RegionRecord]) -> np.ndarray:
        rows = _pmap(self._image_row, records, self.threads)
        return np.array(rows).reshape(len(records), -1)

    def branch_inputs(self, records: Sequence[RegionRecord]) -> dict:
        """Inference-time inputs, using the index over all training regions."""
        return {"I": self.image_matrix(records), "T": self.temporal_matrix(records),
                "M": self.multidim_matrix(records, None)}

    def training_sources(self) -> dict:
        train = self.dataset.training
        return {"I": self.image_matrix(train), "T": self.temporal_matrix(train),
                "M": lambda fold: self.multidim_matrix(train, fold)}


def train_pipeline(
    dataset: DatasetIndex,
    params: Optional[gbdt.GbdtParams] = None,
    fusion_params: Optional[gbdt.GbdtParams] = None,
    seed: int = 0,
    threads: int = 1,
    strict: bool = False,
    store: Optional[RegionFeatures] = None,
) -> tuple[FusedModel, RegionFeatures]:
    store = store or RegionFeatures(dataset, threads)
    model = train_fused(dataset, store.training_sources(), params=params, fusion_params=fusion_params,
                        seed=seed, strict=strict, threads=threads)
    return model, store


def predict_records(model: FusedModel, store: RegionFeatures,
                    records: Sequence[RegionRecord]) -> FusedPrediction:
    if not records:
        empty = np.zeros((0, N_CLASSES))
        return FusedPrediction(np.zeros(0, dtype=np.int64), empty, {k: empty for k in BRANCH_KINDS})
    return predict_fused(model, store.branch_inputs(records))


PREDICTION_HEADER = (["region_id", "label"] + [f"p_{c}" for c in CATEGORY_NAMES]
                     + [f"{k}_{c}" for k in BRANCH_KINDS for c in CATEGORY_NAMES])


def write_predictions(path: Union[str, os.PathLike], region_ids: Sequence[str],
                      pred: FusedPrediction) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PREDICTION_HEADER)
        for i, rid in enumerate(region_ids):
            row = [rid, category_name(int(pred.labels[i]))]
            row += [repr(float(v)) for v in pred.proba[i]]
            for k in BRANCH_KINDS:
                row += [repr(float(v)) for v in pred.branch_proba[k][i]]
            w.writerow(row)


def read_label_csv(path: Union[str, os.PathLike]) -> dict[str, Optional[int]]:
    """``region_id -> label`` from any CSV with ``region_id`` and ``label`` columns."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or "region_id" not in reader.fieldnames or "label" not in reader.fieldnames:
            raise DatasetError(f"{path}: needs region_id and label columns")
        out = {}
        for line_no, row in enumerate(reader, start=2):
            rid = row["region_id"]
            if rid in out:
                raise DatasetError(f"{path} line {line_no}: duplicate region_id {rid!r}")
            lab = (row["label"] or "").strip()
            try:
                out[rid] = category_index(lab) if lab else None
            except ValueError as e:
                raise DatasetError(f"{path} line {line_no}: {e}") from None
    return out


def evaluate_files(pred_path, truth_path, f1_scope: str = "all") -> Evaluation:
    pred = read_label_csv(pred_path)
    truth = {k: v for k, v in read_label_csv(truth_path).items() if v is not None}
    if len(pred) != len(truth) or set(pred) != set(truth):
        raise DatasetError(
            f"prediction/truth mismatch: {len(pred)} predictions vs {len(truth)} labeled regions")
    ids = sorted(truth)
    if any(pred[i] is None for i in ids):
        raise DatasetError("prediction file has empty labels")
    return evaluate([truth[i] for i in ids], [pred[i] for i in ids], f1_scope=f1_scope)
