"""Domain types shared by every stage: category taxonomy, calendar window, visit logs."""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping, Optional

import numpy as np

CATEGORY_NAMES = ("Res", "Sch", "Ind", "Rail", "Air", "Park", "Shop", "Adm", "Hos")
N_CLASSES = len(CATEGORY_NAMES)
HOURS_PER_DAY = 24
DAYS_PER_WEEK = 7
DEFAULT_NUM_DAYS = 182

_NAME_TO_INDEX = {name: i for i, name in enumerate(CATEGORY_NAMES)}


class WindowRangeError(ValueError):
    """A day offset or date falls outside the observation window."""


def category_index(name: str) -> int:
    try:
        return _NAME_TO_INDEX[name]
    except KeyError:
        raise ValueError(f"unknown category name {name!r}") from None


def category_name(index: int) -> str:
    if not 0 <= index < N_CLASSES:
        raise ValueError(f"category index {index} out of range [0, {N_CLASSES})")
    return CATEGORY_NAMES[index]


@dataclass(frozen=True)
class CalendarWindow:
    start_date: dt.date = dt.date(2018, 10, 1)
    num_days: int = DEFAULT_NUM_DAYS

    def __post_init__(self):
        if self.num_days < 1:
            raise ValueError("num_days must be positive")

    @property
    def num_weeks(self) -> int:
        return -(-self.num_days // DAYS_PER_WEEK)

    def day_offset(self, date: dt.date) -> int:
        d = (date - self.start_date).days
        if not 0 <= d < self.num_days:
            raise WindowRangeError(
                f"date {date.isoformat()} outside window starting "
                f"{self.start_date.isoformat()} ({self.num_days} days)"
            )
        return d

    def date_of(self, day_offset: int) -> dt.date:
        self.check_offset(day_offset)
        return self.start_date + dt.timedelta(days=day_offset)

    def check_offset(self, d: int) -> None:
        if not 0 <= d < self.num_days:
            raise WindowRangeError(f"day offset {d} outside [0, {self.num_days})")


DEFAULT_WINDOW = CalendarWindow()


def day_offset_to_week_weekday(d: int, window: CalendarWindow = DEFAULT_WINDOW) -> tuple[int, int]:
    """Map a day offset to ``(week, weekday)``, weekday counted from the window start."""
    window.check_offset(d)
    return d // DAYS_PER_WEEK, d % DAYS_PER_WEEK


def week_weekday_to_day_offset(week: int, weekday: int) -> int:
    return DAYS_PER_WEEK * week + weekday


@dataclass(frozen=True)
class VisitLog:
    """One region's hourly visit records.

    ``visits`` maps each user id to a sorted tuple of unique ``(day_offset, hour)``
    pairs. Build instances with :meth:`from_events` unless the data is already
    canonical.
    """

    region_id: str
    visits: Mapping[str, tuple[tuple[int, int], ...]]
    _arrays: Optional[tuple] = field(default=None, repr=False, compare=False)

    @classmethod
    def from_events(
        cls,
        region_id: str,
        visits: Mapping[str, Iterable[tuple[int, int]]],
        window: CalendarWindow = DEFAULT_WINDOW,
    ) -> "VisitLog":
        canon = {}
        for user in sorted(visits):
            if not user:
                raise ValueError("empty user id")
            events = tuple(sorted({(int(d), int(h)) for d, h in visits[user]}))
            for d, h in events:
                window.check_offset(d)
                if not 0 <= h < HOURS_PER_DAY:
                    raise ValueError(f"hour {h} outside [0, 24)")
            if events:
                canon[user] = events
        return cls(region_id, MappingProxyType(canon))

    @property
    def users(self) -> tuple[str, ...]:
        return tuple(self.visits)

    @property
    def n_events(self) -> int:
        return sum(len(v) for v in self.visits.values())

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Flat ``(user_position, day, hour)`` int arrays, users in sorted order."""
        if self._arrays is None:
            counts = [len(v) for v in self.visits.values()]
            n = sum(counts)
            user_pos = np.repeat(np.arange(len(counts), dtype=np.int64), counts)
            days = np.empty(n, dtype=np.int64)
            hours = np.empty(n, dtype=np.int64)
            i = 0
            for events in self.visits.values():
                for d, h in events:
                    days[i] = d
                    hours[i] = h
                    i += 1
            object.__setattr__(self, "_arrays", (user_pos, days, hours))
        return self._arrays


@dataclass(frozen=True)
class TemporalTensor:
    counts: np.ndarray  # (weeks, 7, 24) int64

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class RegionRecord:
    region_id: str
    label: Optional[int]
    visit_path: str
    image_path: Optional[str] = None

    @property
    def is_training(self) -> bool:
        return self.label is not None
