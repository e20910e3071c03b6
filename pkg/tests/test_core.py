import datetime as dt

import pytest

from mdfl.core import (
    CATEGORY_NAMES,
    N_CLASSES,
    CalendarWindow,
    VisitLog,
    WindowRangeError,
    category_index,
    category_name,
    day_offset_to_week_weekday,
    week_weekday_to_day_offset,
)


@pytest.mark.parametrize("d, expected", [(0, (0, 0)), (181, (25, 6)), (9, (1, 2))])
def test_day_offset_examples(d, expected):
    assert day_offset_to_week_weekday(d) == expected


@pytest.mark.parametrize("d", [-1, 182, 1000])
def test_day_offset_out_of_window(d):
    with pytest.raises(WindowRangeError):
        day_offset_to_week_weekday(d)


def test_calendar_bijection():
    w = CalendarWindow()
    assert w.num_days == 26 * 7 and w.num_weeks == 26
    for d in range(w.num_days):
        week, weekday = day_offset_to_week_weekday(d)
        assert week_weekday_to_day_offset(week, weekday) == d


def test_default_window_starts_monday():
    assert CalendarWindow().start_date.weekday() == 0


def test_category_round_trip():
    assert N_CLASSES == 9
    assert CATEGORY_NAMES == ("Res", "Sch", "Ind", "Rail", "Air", "Park", "Shop", "Adm", "Hos")
    for i, name in enumerate(CATEGORY_NAMES):
        assert category_index(name) == i
        assert category_name(category_index(name)) == name
    with pytest.raises(ValueError):
        category_index("Farm")
    with pytest.raises(ValueError):
        category_name(9)


def test_visit_log_canonicalizes():
    log = VisitLog.from_events("r", {"b": [(1, 2), (0, 5), (1, 2)], "a": [(3, 4)], "c": []})
    assert log.users == ("a", "b")
    assert log.visits["b"] == ((0, 5), (1, 2))
    assert log.n_events == 3
    users, days, hours = log.arrays()
    assert users.tolist() == [0, 1, 1]
    assert days.tolist() == [3, 0, 1]
    assert hours.tolist() == [4, 5, 2]


def test_visit_log_rejects_bad_events():
    with pytest.raises(WindowRangeError):
        VisitLog.from_events("r", {"a": [(182, 0)]})
    with pytest.raises(ValueError):
        VisitLog.from_events("r", {"a": [(0, 24)]})
    with pytest.raises(ValueError):
        VisitLog.from_events("r", {"": [(0, 1)]})


def test_window_day_offset():
    w = CalendarWindow(dt.date(2018, 10, 1), 182)
    assert w.day_offset(dt.date(2018, 10, 10)) == 9
    with pytest.raises(WindowRangeError):
        w.day_offset(dt.date(2018, 9, 30))
