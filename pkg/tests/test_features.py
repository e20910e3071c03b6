import random
import statistics

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mdfl.core import RegionRecord, VisitLog
from mdfl.features import (
    ACTIVITY_DIM,
    GRAPH_DIM,
    MULTIDIM_DIM,
    N_STAT,
    FeatureError,
    build_user_index,
    concat_multidim,
    extract_region_graph,
    extract_statistical,
    extract_user_activity,
    read_feature_bin,
    read_feature_csv,
    user_activity_profile,
    write_feature_bin,
    write_feature_csv,
)


def naive_stat(log):
    """Loop-based reference for the 45-dim layout."""
    events = [(u, d, h) for u, evs in log.visits.items() for d, h in evs]
    if not events:
        return [0.0] * 45
    n = len(events)
    per_user = [len(v) for v in log.visits.values()]
    hours = [h for _, _, h in events]
    out = [n, len(per_user), len({d for _, d, _ in events}),
           statistics.fmean(per_user), statistics.pstdev(per_user), max(per_user), min(per_user),
           statistics.fmean(hours), statistics.pstdev(hours), min(hours), max(hours)]
    out += [sum(1 for h in hours if h == b) / n for b in range(24)]
    out += [sum(1 for _, d, _ in events if d % 7 == k) / n for k in range(7)]
    out.append(sum(1 for _, d, _ in events if d % 7 >= 5) / n)
    out.append(sum(1 for h in hours if 9 <= h < 17) / n)
    out.append(sum(1 for h in hours if h < 6) / n)
    return out


def test_stat_empty():
    v = extract_statistical(VisitLog.from_events("r", {}))
    assert v.shape == (45,) and not v.any()


def test_stat_hand_example():
    v = extract_statistical(VisitLog.from_events("r", {"u": [(0, 9), (0, 10)]}))
    assert v[:11].tolist() == [2, 1, 1, 2, 0, 2, 2, 9.5, 0.5, 9, 10]
    hist = np.zeros(24)
    hist[[9, 10]] = 0.5
    assert v[11:35].tolist() == hist.tolist()
    assert v[35:42].tolist() == [1, 0, 0, 0, 0, 0, 0]
    assert v[42:].tolist() == [0, 1, 0]


def test_stat_two_identical_users():
    one = extract_statistical(VisitLog.from_events("r", {"u": [(0, 9), (0, 10)]}))
    two = extract_statistical(VisitLog.from_events("r", {"u": [(0, 9), (0, 10)], "v": [(0, 9), (0, 10)]}))
    assert two[0] == 2 * one[0] and two[1] == 2 * one[1]
    assert np.array_equal(two[7:], one[7:])


visit_maps = st.dictionaries(
    st.text("abcde", min_size=1, max_size=3),
    st.sets(st.tuples(st.integers(0, 181), st.integers(0, 23)), min_size=1, max_size=15),
    max_size=6,
)


@settings(max_examples=100, deadline=None)
@given(visit_maps)
def test_stat_matches_naive_oracle(visits):
    log = VisitLog.from_events("r", visits)
    v = extract_statistical(log)
    np.testing.assert_allclose(v, naive_stat(log), rtol=1e-12, atol=1e-12)
    if log.n_events:
        assert abs(v[11:35].sum() - 1) < 1e-12 and abs(v[35:42].sum() - 1) < 1e-12
        assert v[6] <= v[3] <= v[5] and v[9] <= v[7] <= v[10]
        assert all(0 <= r <= 1 for r in v[42:])


def _index(regions):
    """regions: list of (region_id, label, {user: events})"""
    recs = [RegionRecord(rid, lab, "") for rid, lab, _ in regions]
    logs = {rid: VisitLog.from_events(rid, vis) for rid, _, vis in regions}
    return build_user_index(recs, logs), logs


def test_index_construction():
    idx, _ = _index([("a", 0, {"u": [(0, 1)]})])
    assert len(idx) == 1 and idx.regions_of("u") == ("a",)
    idx, _ = _index([("c", 1, {"u": [(0, 1)]}), ("a", 0, {"u": [(0, 1)], "v": [(2, 2)]}),
                     ("b", 1, {"u": [(3, 1)]})])
    assert idx.regions_of("u") == ("a", "b", "c")
    recs = [RegionRecord("a", 0, ""), RegionRecord("t", None, "")]
    logs = {"a": VisitLog.from_events("a", {"u": [(0, 1)]}), "t": VisitLog.from_events("t", {"w": [(0, 1)]})}
    idx = build_user_index(recs, logs)
    assert "w" not in idx and "u" in idx


def test_index_errors():
    with pytest.raises(FeatureError, match="region a"):
        build_user_index([RegionRecord("a", 0, "")], {})
    with pytest.raises(FeatureError):
        build_user_index([RegionRecord("t", None, "")], {})


def test_profile_examples():
    idx, _ = _index([("a", 0, {"u": [(0, 8), (0, 9), (1, 8), (1, 9)]})])
    assert not user_activity_profile("nobody", idx).any()
    prof = user_activity_profile("u", idx)
    assert prof.shape == (9, 5)
    assert prof[0].tolist() == [1, 4, 2, 8.5, 0]
    assert not prof[1:].any()
    assert not user_activity_profile("u", idx, exclude_region="a").any()


def test_profile_unions_days_across_regions():
    idx, _ = _index([("a", 0, {"u": [(0, 1), (5, 2)]}), ("b", 0, {"u": [(0, 3), (6, 4)]})])
    prof = user_activity_profile("u", idx)
    # days {0,5} | {0,6}; 2 of 4 events fall on weekday 5/6
    assert prof[0].tolist() == [2, 4, 3, 2.5, 0.5]


def test_user_activity_mean():
    regions = [("a", 0, {"u": [(0, 8)], "v": [(1, 20)]}), ("b", 3, {"u": [(2, 9)]}),
               ("c", 5, {"v": [(5, 10), (6, 11)]})]
    idx, logs = _index(regions)
    target = VisitLog.from_events("t", {"u": [(0, 1)]})
    assert np.array_equal(extract_user_activity(target, idx, "t"), user_activity_profile("u", idx).ravel())
    target = VisitLog.from_events("t", {"u": [(0, 1)], "v": [(0, 2)]})
    expected = (user_activity_profile("u", idx) + user_activity_profile("v", idx)) / 2
    np.testing.assert_array_equal(extract_user_activity(target, idx, "t"), expected.ravel())
    assert not extract_user_activity(VisitLog.from_events("t", {"x": [(0, 1)]}), idx, "t").any()
    # self exclusion
    fa = extract_user_activity(logs["b"], idx, "b")
    assert fa.reshape(9, 5)[3].sum() == 0 and fa.reshape(9, 5)[0, 0] == 1


def test_user_activity_unknown_users_count_in_denominator():
    idx, _ = _index([("a", 0, {"u": [(0, 8)]})])
    target = VisitLog.from_events("t", {"u": [(0, 1)], "stranger": [(0, 1)]})
    np.testing.assert_array_equal(extract_user_activity(target, idx, "t"),
                                  user_activity_profile("u", idx).ravel() / 2)


def test_region_graph_examples():
    regions = [("r1", 0, {"u": [(0, 1)]}), ("r2", 0, {"v": [(0, 2)]}), ("r3", 1, {"v": [(0, 3)]})]
    idx, _ = _index(regions)
    rng = np.random.default_rng(0)
    store = {r: rng.random(45) + 0.1 for r in ("r1", "r2", "r3")}
    target = VisitLog.from_events("t", {"u": [(0, 5)], "v": [(0, 5)]})
    g = extract_region_graph(target, idx, store, "t").reshape(9, 45)
    np.testing.assert_array_equal(g[0], (store["r1"] + store["r2"]) / 2)
    np.testing.assert_array_equal(g[1], store["r3"])
    assert not g[2:].any()
    only_res = VisitLog.from_events("t", {"u": [(0, 5)]})
    g = extract_region_graph(only_res, idx, store, "t").reshape(9, 45)
    assert not g[1:].any() and g[0].any()
    assert extract_region_graph(VisitLog.from_events("t", {}), idx, store, "t").shape == (405,)
    assert not extract_region_graph(VisitLog.from_events("t", {"x": [(0, 0)]}), idx, store, "t").any()
    with pytest.raises(FeatureError):
        extract_region_graph(target, idx, {"r1": store["r1"]}, "t")


def test_region_graph_excludes_self():
    idx, logs = _index([("a", 0, {"u": [(0, 1)]}), ("b", 2, {"u": [(0, 2)]})])
    store = {"a": np.ones(45), "b": np.full(45, 2.0)}
    g = extract_region_graph(logs["a"], idx, store, "a").reshape(9, 45)
    assert not g[0].any() and (g[2] == 2).all()


def test_empty_log_zero_vectors():
    idx, _ = _index([("a", 0, {"u": [(0, 1)]})])
    empty = VisitLog.from_events("t", {})
    assert extract_statistical(empty).shape == (45,)
    fa = extract_user_activity(empty, idx, "t")
    fg = extract_region_graph(empty, idx, {"a": np.ones(45)}, "t")
    assert fa.shape == (45,) and not fa.any()
    assert fg.shape == (405,) and not fg.any()


def test_concat_multidim():
    z = concat_multidim(np.zeros(45), np.zeros(45), np.zeros(405))
    assert z.shape == (MULTIDIM_DIM,) == (495,) and not z.any()
    s = np.zeros(45)
    s[0] = 1
    out = concat_multidim(s, np.zeros(45), np.zeros(405))
    assert out[0] == 1 and not out[45:].any()
    a, b = np.full(45, 1.0), np.full(45, 2.0)
    assert not np.array_equal(concat_multidim(a, b, np.zeros(405)), concat_multidim(b, a, np.zeros(405)))
    with pytest.raises(FeatureError):
        concat_multidim(np.zeros(44), np.zeros(45), np.zeros(405))
    with pytest.raises(FeatureError):
        concat_multidim(np.zeros(45), np.zeros(405), np.zeros(45))


def _random_world(seed, n_regions=12, n_users=15):
    rng = random.Random(seed)
    regions = []
    for i in range(n_regions):
        users = rng.sample(range(n_users), rng.randint(1, 5))
        vis = {f"u{u}": [(rng.randrange(182), rng.randrange(24)) for _ in range(rng.randint(1, 4))]
               for u in users}
        regions.append((f"r{i:02d}", rng.randrange(9), vis))
    return regions


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_activity_mean_invariant_under_user_duplication(seed):
    regions = _random_world(seed)
    idx, logs = _index(regions)
    dup_regions = [(rid, lab, {**vis, **{u + "_dup": ev for u, ev in vis.items()}})
                   for rid, lab, vis in regions]
    idx2, logs2 = _index(dup_regions)
    for rid, _, _ in regions:
        np.testing.assert_allclose(extract_user_activity(logs2[rid], idx2, rid),
                                   extract_user_activity(logs[rid], idx, rid), rtol=1e-12, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_graph_label_mass(seed):
    regions = _random_world(seed)
    idx, logs = _index(regions)
    store = {rid: extract_statistical(logs[rid]) for rid, _, _ in regions}
    labels = {rid: lab for rid, lab, _ in regions}
    for rid, _, _ in regions:
        g = extract_region_graph(logs[rid], idx, store, rid).reshape(9, 45)
        related = {r for u in logs[rid].users for r in idx.regions_of(u)} - {rid}
        assert int((np.abs(g).sum(axis=1) > 0).sum()) == len({labels[r] for r in related})


def test_extractors_deterministic_under_record_order():
    regions = _random_world(7)
    idx, logs = _index(regions)
    idx_rev, _ = _index(list(reversed(regions)))
    store = {rid: extract_statistical(logs[rid]) for rid, _, _ in regions}
    for rid, _, _ in regions:
        assert np.array_equal(extract_user_activity(logs[rid], idx, rid),
                              extract_user_activity(logs[rid], idx_rev, rid))
        assert np.array_equal(extract_region_graph(logs[rid], idx, store, rid),
                              extract_region_graph(logs[rid], idx_rev, store, rid))


def test_feature_export_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    m = rng.normal(size=(4, 7))
    ids = ["a", "b", "région", "d"]
    write_feature_csv(tmp_path / "f.csv", ids, m)
    assert (tmp_path / "f.csv").read_text().splitlines()[0] == "region_id,f0,f1,f2,f3,f4,f5,f6"
    ids2, m2 = read_feature_csv(tmp_path / "f.csv")
    assert ids2 == ids and np.array_equal(m, m2)
    write_feature_bin(tmp_path / "f.bin", ids, m)
    ids3, m3 = read_feature_bin(tmp_path / "f.bin")
    assert ids3 == ids and np.array_equal(m, m3)
    raw = (tmp_path / "f.bin").read_bytes()
    assert raw[:8] == b"MDFLFEAT"
    (tmp_path / "t.bin").write_bytes(raw[:-3])
    with pytest.raises(FeatureError):
        read_feature_bin(tmp_path / "t.bin")
    (tmp_path / "x.bin").write_bytes(b"NOTMAGIC" + raw[8:])
    with pytest.raises(FeatureError):
        read_feature_bin(tmp_path / "x.bin")


def test_dims():
    assert (N_STAT, ACTIVITY_DIM, GRAPH_DIM) == (45, 45, 405)
