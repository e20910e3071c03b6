"""Synthetic region datasets with per-category visit signatures and image tints.

Signal enters through three routes, all scaled down by ``noise``:

* temporal: each category has an hour-of-day and weekday profile; regions
  draw a jittered copy blended toward uniform.
* social: users have 1-3 home categories and mostly visit regions of those
  categories, so co-visited regions reveal the category.
* visual: category colour tint and texture strength in 100x100 PNGs.

At ``noise=1`` all three routes carry no category information.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

from .core import DAYS_PER_WEEK, HOURS_PER_DAY, N_CLASSES, CalendarWindow, RegionRecord, VisitLog
from .ingest import serialize_visit_log, write_manifest

_HOURS = np.arange(HOURS_PER_DAY)


def _bumps(*peaks, floor=0.05):
    prof = np.full(HOURS_PER_DAY, floor)
    for center, width, height in peaks:
        d = np.minimum(np.abs(_HOURS - center), HOURS_PER_DAY - np.abs(_HOURS - center))
        prof += height * np.exp(-0.5 * (d / width) ** 2)
    return prof / prof.sum()


def _week(*w):
    w = np.asarray(w, dtype=float)
    return w / w.sum()


# Res, Sch, Ind, Rail, Air, Park, Shop, Adm, Hos
HOUR_SIGNATURES = np.array([
    _bumps((22, 3.0, 1.0), (7, 1.5, 0.6)),
    _bumps((8, 1.0, 1.0), (12, 2.5, 0.6), (16, 1.0, 0.7)),
    _bumps((9, 1.5, 0.8), (14, 3.0, 0.8)),
    _bumps((8, 1.0, 1.0), (18, 1.2, 1.0)),
    _bumps((6, 1.5, 0.7), (14, 5.0, 0.6), (21, 1.5, 0.5), floor=0.15),
    _bumps((10, 1.5, 0.6), (16, 2.0, 0.9)),
    _bumps((15, 2.0, 0.6), (20, 1.5, 1.0)),
    _bumps((10, 2.0, 1.0), (15, 2.0, 0.8)),
    _bumps((10, 3.0, 0.9), (19, 2.0, 0.4), floor=0.1),
])

WEEKDAY_SIGNATURES = np.array([
    _week(1, 1, 1, 1, 1, 1.5, 1.5),
    _week(1, 1, 1, 1, 1, 0.15, 0.1),
    _week(1, 1, 1, 1, 1, 0.4, 0.3),
    _week(1, 0.9, 0.9, 0.9, 1.2, 1.3, 1.3),
    _week(1, 1, 1, 1, 1.1, 1.1, 1.1),
    _week(0.6, 0.6, 0.6, 0.6, 0.7, 1.8, 1.8),
    _week(0.8, 0.8, 0.8, 0.8, 1.0, 1.6, 1.6),
    _week(1, 1, 1, 1, 1, 0.1, 0.1),
    _week(1, 1, 1, 1, 1, 0.8, 0.8),
])

# similar tints for pairs that look alike from above: Res/Shop, Adm/Hos
TINTS = np.array([
    [150, 128, 118],
    [140, 138, 112],
    [118, 120, 132],
    [112, 110, 108],
    [158, 158, 150],
    [96, 138, 88],
    [152, 126, 124],
    [132, 130, 126],
    [134, 128, 130],
], dtype=float)
TEXTURE = np.array([14, 8, 18, 22, 4, 6, 14, 10, 10], dtype=float)
NEUTRAL = np.array([130.0, 128.0, 122.0])


@dataclass(frozen=True)
class SynthConfig:
    n_regions: int = 100  # per category
    n_users: int = 2000
    window: CalendarWindow = field(default_factory=CalendarWindow)
    noise: float = 0.3
    seed: int = 42
    test_fraction: float = 0.2
    favorites: tuple[int, int] = (2, 6)
    events_per_visit: float = 3.0
    profile_concentration: float = 8.0
    image_size: int = 100

    def __post_init__(self):
        if self.n_regions < 1 or self.n_users < 1:
            raise ValueError("n_regions and n_users must be positive")
        if not 0.0 <= self.noise <= 1.0:
            raise ValueError("noise must lie in [0, 1]")
        if not 0.0 <= self.test_fraction < 1.0:
            raise ValueError("test_fraction must lie in [0, 1)")


@dataclass
class SynthDataset:
    root: Path
    records: list
    truth: dict  # region_id -> label, every region


def _rng(cfg: SynthConfig, stage: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([cfg.seed, stage]))


def _assign_users(cfg: SynthConfig, labels: np.ndarray) -> list[np.ndarray]:
    """Per user: sorted array of favourite region indices."""
    rng = _rng(cfg, 2)
    n_regions = labels.size
    by_cat = [np.nonzero(labels == c)[0] for c in range(N_CLASSES)]
    lo, hi = cfg.favorites
    out = []
    for _ in range(cfg.n_users):
        homes = rng.choice(N_CLASSES, size=rng.integers(1, 4), replace=False)
        k = min(int(rng.integers(lo, hi + 1)), n_regions)
        picks = set()
        while len(picks) < k:
            if rng.random() < cfg.noise:
                picks.add(int(rng.integers(n_regions)))
            else:
                pool = by_cat[homes[rng.integers(homes.size)]]
                picks.add(int(pool[rng.integers(pool.size)]))
        out.append(np.array(sorted(picks)))
    return out


def _region_profiles(cfg: SynthConfig, labels: np.ndarray):
    rng = _rng(cfg, 3)
    n = cfg.noise
    hours, days = [], []
    for c in labels:
        hp = (1 - n) * HOUR_SIGNATURES[c] + n / HOURS_PER_DAY
        wp = (1 - n) * WEEKDAY_SIGNATURES[c] + n / DAYS_PER_WEEK
        hours.append(rng.dirichlet(cfg.profile_concentration * HOURS_PER_DAY * hp))
        days.append(rng.dirichlet(cfg.profile_concentration * DAYS_PER_WEEK * wp))
    return hours, days


def _render_image(cfg: SynthConfig, label: int, rng: np.random.Generator) -> np.ndarray:
    s = cfg.image_size
    n = cfg.noise
    base = (1 - n) * TINTS[label] + n * NEUTRAL + rng.normal(0, 16, size=3)
    texture_amp = ((1 - n) * TEXTURE[label] + n * TEXTURE.mean()) * rng.uniform(0.4, 1.6)
    period = rng.uniform(4, 12)
    phase = rng.uniform(0, 2 * np.pi)
    angle = rng.uniform(0, np.pi)
    yy, xx = np.mgrid[0:s, 0:s]
    wave = np.sin((xx * np.cos(angle) + yy * np.sin(angle)) * 2 * np.pi / period + phase)
    img = base[None, None, :] + texture_amp * wave[..., None] + rng.normal(0, 20, size=(s, s, 3))
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def generate(cfg: SynthConfig):
    """Build an in-memory dataset: labels, visit logs, images, test mask."""
    n_total = cfg.n_regions * N_CLASSES
    labels = np.repeat(np.arange(N_CLASSES), cfg.n_regions)
    labels = labels[_rng(cfg, 1).permutation(n_total)]
    region_ids = [f"r{i:05d}" for i in range(n_total)]

    favs = _assign_users(cfg, labels)
    hour_p, day_p = _region_profiles(cfg, labels)
    visitors: list[list[int]] = [[] for _ in range(n_total)]
    for u, regions in enumerate(favs):
        for r in regions:
            visitors[r].append(u)

    rng_ev = _rng(cfg, 4)
    n_weeks = cfg.window.num_weeks
    logs = []
    for r in range(n_total):
        visits = {}
        for u in visitors[r]:
            m = 1 + int(rng_ev.poisson(cfg.events_per_visit))
            wk = rng_ev.integers(0, n_weeks, size=m)
            wd = rng_ev.choice(DAYS_PER_WEEK, size=m, p=day_p[r])
            hr = rng_ev.choice(HOURS_PER_DAY, size=m, p=hour_p[r])
            d = wk * DAYS_PER_WEEK + wd
            ok = d < cfg.window.num_days
            visits[f"U{u:06d}"] = list(zip(d[ok].tolist(), hr[ok].tolist()))
        logs.append(VisitLog.from_events(region_ids[r], visits, cfg.window))

    rng_img = _rng(cfg, 5)
    images = [_render_image(cfg, int(labels[r]), rng_img) for r in range(n_total)]

    rng_split = _rng(cfg, 6)
    is_test = np.zeros(n_total, dtype=bool)
    for c in range(N_CLASSES):
        idx = np.nonzero(labels == c)[0]
        n_test = int(round(cfg.test_fraction * idx.size))
        is_test[rng_split.permutation(idx)[:n_test]] = True
    return region_ids, labels, logs, images, is_test


def synth(cfg: SynthConfig, out_dir: Union[str, os.PathLike]) -> SynthDataset:
    """Write ``manifest.csv``, ``truth.csv``, ``visits/*.txt`` and ``images/*.png``."""
    from PIL import Image

    root = Path(out_dir)
    (root / "visits").mkdir(parents=True, exist_ok=True)
    (root / "images").mkdir(parents=True, exist_ok=True)
    region_ids, labels, logs, images, is_test = generate(cfg)
    records = []
    for rid, lab, log, img, test in zip(region_ids, labels, logs, images, is_test):
        visit_rel = f"visits/{rid}.txt"
        image_rel = f"images/{rid}.png"
        (root / visit_rel).write_text(serialize_visit_log(log, cfg.window), encoding="utf-8")
        Image.fromarray(img, mode="RGB").save(root / image_rel, format="PNG")
        records.append(RegionRecord(rid, None if test else int(lab), visit_rel, image_rel))
    write_manifest(root / "manifest.csv", records)
    truth_records = [RegionRecord(rid, int(lab), "", "") for rid, lab, t in
                     zip(region_ids, labels, is_test) if t]
    _write_truth(root / "truth.csv", truth_records)
    return SynthDataset(root, records, {rid: int(lab) for rid, lab in zip(region_ids, labels)})


def _write_truth(path: Path, records) -> None:
    from .core import category_name

    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("region_id,label\n")
        for r in records:
            fh.write(f"{r.region_id},{category_name(r.label)}\n")
