"""Visit-file parsing, temporal tensors and dataset manifests.

Visit file format, one user per line::

    USER_ID<TAB>YYYYMMDD&hh|hh|hh,YYYYMMDD&hh|hh

Hours are zero-padded to two digits. Duplicate ``(user, day, hour)`` events
collapse to one; a user may appear on several lines and is merged.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import os
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import IO, Iterator, Optional, Sequence, Union

import numpy as np

from .core import (
    DAYS_PER_WEEK,
    DEFAULT_WINDOW,
    HOURS_PER_DAY,
    CalendarWindow,
    RegionRecord,
    TemporalTensor,
    VisitLog,
    WindowRangeError,
    category_index,
    category_name,
)

MANIFEST_HEADER = ("region_id", "label", "visit_path", "image_path")

_DATE_RE = re.compile(r"\d{8}")
_HOUR_RE = re.compile(r"\d{2}")


class VisitParseError(ValueError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class VisitRangeError(WindowRangeError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class DatasetError(ValueError):
    pass


def _parse_date(token: str, line_no: int) -> dt.date:
    if not _DATE_RE.fullmatch(token):
        raise VisitParseError(line_no, f"bad date {token!r}")
    try:
        return dt.date(int(token[:4]), int(token[4:6]), int(token[6:]))
    except ValueError:
        raise VisitParseError(line_no, f"bad date {token!r}") from None


def _parse_line(line: str, line_no: int, window: CalendarWindow, day_cache: dict):
    user, sep, body = line.partition("\t")
    if not sep:
        raise VisitParseError(line_no, "missing tab separator")
    if not user or user != user.strip():
        raise VisitParseError(line_no, "empty or padded user id")
    events = []
    for chunk in body.split(","):
        date_tok, amp, hours_tok = chunk.partition("&")
        if not amp or not hours_tok:
            raise VisitParseError(line_no, f"bad day record {chunk!r}")
        day = day_cache.get(date_tok)
        if day is None:
            date = _parse_date(date_tok, line_no)
            try:
                day = window.day_offset(date)
            except WindowRangeError as e:
                raise VisitRangeError(line_no, str(e)) from None
            day_cache[date_tok] = day
        for tok in hours_tok.split("|"):
            if not _HOUR_RE.fullmatch(tok) or int(tok) >= HOURS_PER_DAY:
                raise VisitParseError(line_no, f"bad hour {tok!r}")
            events.append((day, int(tok)))
    return user, events


def iter_visit_lines(
    stream: Union[IO[bytes], IO[str]], window: CalendarWindow = DEFAULT_WINDOW
) -> Iterator[tuple[str, list[tuple[int, int]]]]:
    """Yield ``(user_id, events)`` per line without buffering the stream.

    Blank lines are skipped. Raises :class:`VisitParseError` or
    :class:`VisitRangeError` carrying the 1-based line number.
    """
    day_cache: dict[str, int] = {}
    for line_no, raw in enumerate(stream, start=1):
        if isinstance(raw, bytes):
            try:
                raw = raw.decode("utf-8")
            except UnicodeDecodeError:
                raise VisitParseError(line_no, "invalid UTF-8") from None
        line = raw.rstrip("\r\n")
        if not line.strip():
            continue
        yield _parse_line(line, line_no, window, day_cache)


def parse_visit_file(
    stream: Union[IO[bytes], IO[str], bytes, str],
    window: CalendarWindow = DEFAULT_WINDOW,
    region_id: str = "",
) -> VisitLog:
    if isinstance(stream, bytes):
        stream = io.BytesIO(stream)
    elif isinstance(stream, str):
        stream = io.StringIO(stream)
    visits: dict[str, set] = {}
    for user, events in iter_visit_lines(stream, window):
        visits.setdefault(user, set()).update(events)
    return VisitLog.from_events(region_id, visits, window)


def read_visit_log(path: Union[str, os.PathLike], window: CalendarWindow = DEFAULT_WINDOW,
                   region_id: str = "") -> VisitLog:
    with open(path, "rb") as fh:
        return parse_visit_file(fh, window, region_id)


def serialize_visit_log(log: VisitLog, window: CalendarWindow = DEFAULT_WINDOW) -> str:
    """Canonical text form: users sorted, dates ascending, hours ascending."""
    out = []
    for user in sorted(log.visits):
        by_day: dict[int, list[int]] = {}
        for d, h in log.visits[user]:
            by_day.setdefault(d, []).append(h)
        chunks = []
        for d in sorted(by_day):
            date = window.date_of(d).strftime("%Y%m%d")
            chunks.append(date + "&" + "|".join(f"{h:02d}" for h in sorted(by_day[d])))
        out.append(f"{user}\t{','.join(chunks)}\n")
    return "".join(out)


def build_temporal_tensor(log: VisitLog, window: CalendarWindow = DEFAULT_WINDOW) -> TemporalTensor:
    counts = np.zeros((window.num_weeks, DAYS_PER_WEEK, HOURS_PER_DAY), dtype=np.int64)
    _, days, hours = log.arrays()
    if days.size:
        np.add.at(counts, (days // DAYS_PER_WEEK, days % DAYS_PER_WEEK, hours), 1)
    return TemporalTensor(counts)


@dataclass(frozen=True)
class DatasetIndex:
    root: Path
    window: CalendarWindow
    records: tuple[RegionRecord, ...]
    k_folds: int
    folds: dict = field(default_factory=dict)  # region_id -> fold id, training records only

    @property
    def training(self) -> tuple[RegionRecord, ...]:
        return tuple(r for r in self.records if r.is_training)

    @property
    def test(self) -> tuple[RegionRecord, ...]:
        return tuple(r for r in self.records if not r.is_training)

    def fold_array(self) -> np.ndarray:
        return np.array([self.folds[r.region_id] for r in self.training], dtype=np.int64)

    def label_array(self) -> np.ndarray:
        return np.array([r.label for r in self.training], dtype=np.int64)

    def resolve(self, rel: str) -> Path:
        return self.root / rel

    def with_folds(self, k_folds: int, seed: int) -> "DatasetIndex":
        return replace(self, k_folds=k_folds, folds=assign_folds(self.training, k_folds, seed))

    def with_records(self, records: Sequence[RegionRecord]) -> "DatasetIndex":
        """Swap records in place, keeping the existing fold assignment."""
        return replace(self, records=tuple(records))


def assign_folds(records: Sequence[RegionRecord], k_folds: int, seed: int) -> dict:
    """Stratified assignment: shuffle each category, then deal round-robin.

    The deal position carries over between categories so every fold is
    non-empty whenever ``k_folds <= len(records)``.
    """
    if k_folds < 2:
        raise DatasetError("k_folds must be >= 2")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5F01D]))
    by_cat: dict[int, list[str]] = {}
    for r in sorted(records, key=lambda r: r.region_id):
        by_cat.setdefault(r.label, []).append(r.region_id)
    folds = {}
    pos = 0
    for cat in sorted(by_cat):
        ids = by_cat[cat]
        for j in rng.permutation(len(ids)):
            folds[ids[j]] = pos % k_folds
            pos += 1
    return folds


def read_manifest(manifest_path: Union[str, os.PathLike]) -> list[RegionRecord]:
    with open(manifest_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != MANIFEST_HEADER:
            raise DatasetError(f"manifest header must be {','.join(MANIFEST_HEADER)}")
        records, seen = [], set()
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise DatasetError(f"manifest line {line_no}: expected 4 fields")
            rid, label, visit_path, image_path = (x.strip() for x in row)
            if not rid:
                raise DatasetError(f"manifest line {line_no}: empty region_id")
            if rid in seen:
                raise DatasetError(f"manifest line {line_no}: duplicate region_id {rid!r}")
            seen.add(rid)
            try:
                lab = category_index(label) if label else None
            except ValueError as e:
                raise DatasetError(f"manifest line {line_no}: {e}") from None
            records.append(RegionRecord(rid, lab, visit_path, image_path or None))
    return records


def write_manifest(path: Union[str, os.PathLike], records: Sequence[RegionRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_HEADER)
        for r in records:
            w.writerow([r.region_id, "" if r.label is None else category_name(r.label),
                        r.visit_path, r.image_path or ""])


def load_dataset(
    root_path: Union[str, os.PathLike],
    manifest_path: Optional[Union[str, os.PathLike]] = None,
    k_folds: int = 5,
    seed: int = 0,
    window: CalendarWindow = DEFAULT_WINDOW,
) -> DatasetIndex:
    if k_folds < 2:
        raise DatasetError("k_folds must be >= 2")
    root = Path(root_path)
    manifest = Path(manifest_path) if manifest_path is not None else root / "manifest.csv"
    if not manifest.is_file():
        raise DatasetError(f"manifest not found: {manifest}")
    records = read_manifest(manifest)
    for r in records:
        if not (root / r.visit_path).is_file():
            raise DatasetError(f"region {r.region_id}: missing visit file {r.visit_path}")
        if r.image_path and not (root / r.image_path).is_file():
            raise DatasetError(f"region {r.region_id}: missing image file {r.image_path}")
    index = DatasetIndex(root, window, tuple(records), k_folds)
    if not index.training:
        return index
    return index.with_folds(k_folds, seed)
