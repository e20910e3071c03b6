"""Multi-dimension region features: statistics, user activity and region graph.

Layouts are fixed contracts:

* statistical vector (45): totals, per-user event stats, hour stats,
  24-bin hour histogram, 7-bin weekday histogram, weekend/work-hour/night ratios.
* activity profile (9 x 5): per category ``[regions, events, distinct days,
  mean hour, weekend ratio]``.
* region graph (9 x 45): per category mean statistical vector of co-visited regions.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from types import MappingProxyType
from typing import Callable, Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from .core import DAYS_PER_WEEK, HOURS_PER_DAY, N_CLASSES, RegionRecord, VisitLog

N_STAT = 45
N_ACTIVITY = 5
ACTIVITY_DIM = N_CLASSES * N_ACTIVITY
GRAPH_DIM = N_CLASSES * N_STAT
MULTIDIM_DIM = N_STAT + ACTIVITY_DIM + GRAPH_DIM

HOUR_HIST = slice(11, 35)
WEEKDAY_HIST = slice(35, 42)
WEEKEND_DAYS = (5, 6)
WORK_HOURS = (9, 17)
NIGHT_HOURS = (0, 6)

FEATURE_BIN_MAGIC = b"MDFLFEAT"
FEATURE_BIN_VERSION = 1


class FeatureError(ValueError):
    pass


def extract_statistical(log: VisitLog) -> np.ndarray:
    out = np.zeros(N_STAT)
    user_pos, days, hours = log.arrays()
    n = days.size
    if n == 0:
        return out
    per_user = np.bincount(user_pos).astype(float)
    weekday = days % DAYS_PER_WEEK
    hrs = hours.astype(float)
    out[0] = n
    out[1] = per_user.size
    out[2] = np.unique(days).size
    out[3] = per_user.mean()
    out[4] = per_user.std()
    out[5] = per_user.max()
    out[6] = per_user.min()
    out[7] = hrs.mean()
    out[8] = hrs.std()
    out[9] = hrs.min()
    out[10] = hrs.max()
    out[HOUR_HIST] = np.bincount(hours, minlength=HOURS_PER_DAY) / n
    out[WEEKDAY_HIST] = np.bincount(weekday, minlength=DAYS_PER_WEEK) / n
    out[42] = np.isin(weekday, WEEKEND_DAYS).sum() / n
    out[43] = ((hours >= WORK_HOURS[0]) & (hours < WORK_HOURS[1])).sum() / n
    out[44] = ((hours >= NIGHT_HOURS[0]) & (hours < NIGHT_HOURS[1])).sum() / n
    return out


@dataclass(frozen=True)
class VisitSummary:
    """One user's activity inside one region."""

    n_events: int
    days: tuple[int, ...]
    hours: tuple[int, ...]
    weekend_count: int

    @property
    def day_mask(self) -> int:
        m = 0
        for d in self.days:
            m |= 1 << d
        return m


@dataclass(frozen=True)
class IndexEntry:
    region_id: str
    label: int
    summary: VisitSummary


def summarize_log(log: VisitLog) -> dict[str, VisitSummary]:
    out = {}
    for user, events in log.visits.items():
        days = tuple(sorted({d for d, _ in events}))
        hours = tuple(h for _, h in events)
        weekend = sum(1 for d, _ in events if d % DAYS_PER_WEEK in WEEKEND_DAYS)
        out[user] = VisitSummary(len(events), days, hours, weekend)
    return out


class UserIndex:
    """Inverted index user -> labeled regions visited. Read-only once built."""

    def __init__(self, entries: Mapping[str, Sequence[IndexEntry]]):
        self.entries = MappingProxyType(
            {u: tuple(sorted(es, key=lambda e: e.region_id)) for u, es in entries.items()}
        )
        labels = {}
        for es in self.entries.values():
            for e in es:
                labels[e.region_id] = e.label
        self.region_labels = MappingProxyType(labels)
        # per entry: (region_id, label, n_events, hour_sum, weekend, day_mask)
        self._packed = {
            u: tuple((e.region_id, e.label, e.summary.n_events, sum(e.summary.hours),
                      e.summary.weekend_count, e.summary.day_mask) for e in es)
            for u, es in self.entries.items()
        }

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, user_id) -> bool:
        return user_id in self.entries

    def regions_of(self, user_id: str) -> tuple[str, ...]:
        return tuple(e.region_id for e in self.entries.get(user_id, ()))


LogSource = Union[Mapping[str, VisitLog], Callable[[str], VisitLog]]


def _get_log(logs: LogSource, region_id: str) -> VisitLog:
    try:
        return logs(region_id) if callable(logs) else logs[region_id]
    except (KeyError, FileNotFoundError) as e:
        raise FeatureError(f"missing visit log for region {region_id}") from e


def build_user_index(
    records: Iterable[RegionRecord],
    logs: LogSource,
    summaries: Optional[Mapping[str, Mapping[str, VisitSummary]]] = None,
) -> UserIndex:
    """Index every (user, labeled region) pair with at least one event.

    ``records`` may be a :class:`~mdfl.ingest.DatasetIndex`; unlabeled records
    are ignored. ``summaries`` is an optional precomputed
    ``region_id -> summarize_log(...)`` cache.
    """
    if hasattr(records, "training"):
        records = records.training
    entries: dict[str, list[IndexEntry]] = {}
    n_labeled = 0
    for r in records:
        if r.label is None:
            continue
        n_labeled += 1
        if summaries is not None and r.region_id in summaries:
            per_user = summaries[r.region_id]
        else:
            per_user = summarize_log(_get_log(logs, r.region_id))
        for user, s in per_user.items():
            entries.setdefault(user, []).append(IndexEntry(r.region_id, r.label, s))
    if n_labeled == 0:
        raise FeatureError("user index needs at least one labeled region")
    return UserIndex(entries)


def _profile(packed, exclude_region: Optional[str]) -> np.ndarray:
    prof = np.zeros((N_CLASSES, N_ACTIVITY))
    masks = [0] * N_CLASSES
    hour_sum = [0] * N_CLASSES
    weekend = [0] * N_CLASSES
    for rid, c, n, hs, wk, mask in packed:
        if rid == exclude_region:
            continue
        prof[c, 0] += 1
        prof[c, 1] += n
        masks[c] |= mask
        hour_sum[c] += hs
        weekend[c] += wk
    for c in range(N_CLASSES):
        n = prof[c, 1]
        if n > 0:
            prof[c, 2] = masks[c].bit_count()
            prof[c, 3] = hour_sum[c] / n
            prof[c, 4] = weekend[c] / n
    return prof


def user_activity_profile(user_id: str, index: UserIndex,
                          exclude_region: Optional[str] = None) -> np.ndarray:
    """Per-category activity matrix (9 x 5) of one user; unknown users give zeros."""
    return _profile(index._packed.get(user_id, ()), exclude_region)


def extract_user_activity(log: VisitLog, index: UserIndex, self_region: Optional[str] = None) -> np.ndarray:
    # denominator is every user in the log, known to the index or not
    users = log.users
    total = np.zeros((N_CLASSES, N_ACTIVITY))
    if not users:
        return total.ravel()
    for u in users:
        packed = index._packed.get(u)
        if packed:
            total += _profile(packed, self_region)
    return (total / len(users)).ravel()


def related_regions(log: VisitLog, index: UserIndex, self_region: Optional[str] = None) -> list[str]:
    related = set()
    for u in log.users:
        related.update(index.regions_of(u))
    related.discard(self_region)
    return sorted(related)


def extract_region_graph(
    log: VisitLog,
    index: UserIndex,
    stat_store: Mapping[str, np.ndarray],
    self_region: Optional[str] = None,
) -> np.ndarray:
    out = np.zeros((N_CLASSES, N_STAT))
    related = related_regions(log, index, self_region)
    if not related:
        return out.ravel()
    counts = np.zeros(N_CLASSES)
    for rid in related:
        try:
            vec = stat_store[rid]
        except KeyError:
            raise FeatureError(f"no statistical feature stored for related region {rid}") from None
        c = index.region_labels[rid]
        out[c] += vec
        counts[c] += 1
    nz = counts > 0
    out[nz] /= counts[nz, None]
    return out.ravel()


def concat_multidim(f_stat, f_activity, f_graph) -> np.ndarray:
    parts = [np.asarray(f, dtype=float).ravel() for f in (f_stat, f_activity, f_graph)]
    for part, dim, name in zip(parts, (N_STAT, ACTIVITY_DIM, GRAPH_DIM), ("stat", "activity", "graph")):
        if part.size != dim:
            raise FeatureError(f"{name} block has dimension {part.size}, expected {dim}")
    return np.concatenate(parts)


def write_feature_csv(path: Union[str, os.PathLike], region_ids: Sequence[str], matrix: np.ndarray) -> None:
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != len(region_ids):
        raise FeatureError("feature matrix rows must match region ids")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(["region_id"] + [f"f{j}" for j in range(matrix.shape[1])]) + "\n")
        for rid, row in zip(region_ids, matrix):
            fh.write(rid + "," + ",".join(repr(float(v)) for v in row) + "\n")


def read_feature_csv(path: Union[str, os.PathLike]) -> tuple[list[str], np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split(",")
        if not header or header[0] != "region_id":
            raise FeatureError("feature CSV must start with region_id column")
        ids, rows = [], []
        for line in fh:
            parts = line.rstrip("\n").split(",")
            ids.append(parts[0])
            rows.append([float(v) for v in parts[1:]])
    return ids, np.array(rows, dtype=float).reshape(len(ids), len(header) - 1)


def write_feature_bin(path: Union[str, os.PathLike], region_ids: Sequence[str], matrix: np.ndarray) -> None:
    """Little-endian block: magic, u32 version, u32 rows, u32 cols,
    per-row ``u16 length + utf-8 id``, then row-major float64 values."""
    matrix = np.ascontiguousarray(matrix, dtype="<f8")
    if matrix.ndim != 2 or matrix.shape[0] != len(region_ids):
        raise FeatureError("feature matrix rows must match region ids")
    with open(path, "wb") as fh:
        fh.write(FEATURE_BIN_MAGIC)
        fh.write(struct.pack("<III", FEATURE_BIN_VERSION, *matrix.shape))
        for rid in region_ids:
            b = rid.encode("utf-8")
            fh.write(struct.pack("<H", len(b)) + b)
        fh.write(matrix.tobytes())


def read_feature_bin(path: Union[str, os.PathLike]) -> tuple[list[str], np.ndarray]:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != FEATURE_BIN_MAGIC:
        raise FeatureError("not a feature block (bad magic)")
    try:
        version, n_rows, n_cols = struct.unpack_from("<III", data, 8)
        if version != FEATURE_BIN_VERSION:
            raise FeatureError(f"unsupported feature block version {version}")
        pos = 20
        ids = []
        for _ in range(n_rows):
            (ln,) = struct.unpack_from("<H", data, pos)
            ids.append(data[pos + 2:pos + 2 + ln].decode("utf-8"))
            pos += 2 + ln
        body = data[pos:]
        if len(body) != 8 * n_rows * n_cols:
            raise FeatureError("feature block truncated")
        matrix = np.frombuffer(body, dtype="<f8").reshape(n_rows, n_cols).astype(float)
    except struct.error:
        raise FeatureError("feature block truncated") from None
    return ids, matrix
