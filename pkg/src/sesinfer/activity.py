"""POI-based activity inference and temporal binning for stay points.

Each stay point is tagged with the dominant POI category of the grid
neighborhood it falls in, a 48-slot time bin (24 weekday hours + 24
weekend hours), and the day-of-week index inside its week.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Mapping

from .geo import CellId, GridSpec, OutOfArea, cell_of, neighborhood

if TYPE_CHECKING:  # pragma: no cover - annotations only
    from .ingest import PoiRecord, WeekSlice
    from .preprocess import StayPoint

# Closed category set, alphabetical so integer codes are reproducible.
POI_CATEGORIES: tuple[str, ...] = (
    "attractions",
    "community",
    "education",
    "food_and_drink",
    "hospitals",
    "lodging",
    "recreation",
    "residence",
    "shopping",
    "traffic",
    "working",
)

OTHER_CATEGORY = "other"
NONE_CATEGORY = "none"  # accepted on ingest for uncategorized POIs, never inferred

CATEGORY_CODES: dict[str, int] = {name: i for i, name in enumerate(POI_CATEGORIES)}
CATEGORY_CODES[OTHER_CATEGORY] = len(POI_CATEGORIES)

ALL_CATEGORIES: tuple[str, ...] = POI_CATEGORIES + (OTHER_CATEGORY,)

SECONDS_PER_DAY = 86_400
SECONDS_PER_WEEK = 7 * SECONDS_PER_DAY
TIME_BINS = 48


def category_code(name: str) -> int:
    try:
        return CATEGORY_CODES[name]
    except KeyError:
        raise ValueError(f"unknown activity category {name!r}") from None


@dataclass
class PoiIndex:
    """Per-cell POI category histogram.

    ``skipped`` counts input records that contributed nothing: POIs outside
    the grid plus uncategorized ("none") POIs.
    """

    counts: dict[CellId, list[int]] = field(default_factory=dict)
    skipped: int = 0

    def total(self) -> int:
        return sum(sum(c) for c in self.counts.values())


@dataclass(frozen=True)
class ActivityEvent:
    """One stay point enriched with semantic and temporal features."""

    stay: "StayPoint"
    category: str
    time_bin: int
    day_index: int

    @property
    def category_code(self) -> int:
        return CATEGORY_CODES[self.category]


def build_poi_index(pois: Iterable["PoiRecord"], grid: GridSpec) -> PoiIndex:
    """Histogram POIs by grid cell and category."""
    idx = PoiIndex()
    for poi in pois:
        if poi.category == NONE_CATEGORY:
            idx.skipped += 1
            continue
        try:
            cell = cell_of(poi.point, grid)
        except OutOfArea:
            idx.skipped += 1
            continue
        bucket = idx.counts.get(cell)
        if bucket is None:
            bucket = [0] * len(POI_CATEGORIES)
            idx.counts[cell] = bucket
        bucket[CATEGORY_CODES[poi.category]] += 1
    return idx


def infer_activity(
    stay: "StayPoint",
    idx: PoiIndex,
    grid: GridSpec,
    include_center: bool = True,
) -> str:
    """Most frequent POI category in the cell block around the stay.

    Returns ``"other"`` when the neighborhood holds no POIs. Ties resolve
    to the smallest category code so inference is order-independent.
    """
    totals = [0] * len(POI_CATEGORIES)
    for cell in neighborhood(stay.cell, grid, include_center=include_center):
        bucket = idx.counts.get(cell)
        if bucket is not None:
            for code, n in enumerate(bucket):
                totals[code] += n
    best = max(totals)
    if best == 0:
        return OTHER_CATEGORY
    return POI_CATEGORIES[totals.index(best)]


def time_bin(ts: int, tz_offset_s: int) -> int:
    """48-slot bin for a timestamp: local hour, shifted by 24 on weekends."""
    local = ts + tz_offset_s
    hour = (local % SECONDS_PER_DAY) // 3600
    weekday = (local // SECONDS_PER_DAY + 3) % 7  # epoch day 0 is a Thursday; Monday = 0
    return int(hour + (24 if weekday >= 5 else 0))


def build_week_events(
    week: "WeekSlice",
    stays: Iterable["StayPoint"],
    idx: PoiIndex,
    grid: GridSpec,
    tz_offset_s: int,
    include_center: bool = True,
) -> list[list[ActivityEvent]]:
    """Group a week's stays into 7 per-day event lists, ordered by arrival.

    A stay whose interval crosses midnight belongs to the day it arrived on.
    """
    days: list[list[ActivityEvent]] = [[] for _ in range(7)]
    for stay in sorted(stays, key=lambda s: s.arrival_ts):
        offset = stay.arrival_ts - week.week_start
        if not 0 <= offset < SECONDS_PER_WEEK:
            raise ValueError(f"stay at {stay.arrival_ts} outside week starting {week.week_start}")
        day = offset // SECONDS_PER_DAY
        days[day].append(
            ActivityEvent(
                stay=stay,
                category=infer_activity(stay, idx, grid, include_center=include_center),
                time_bin=time_bin(stay.arrival_ts, tz_offset_s),
                day_index=int(day),
            )
        )
    return days


def write_category_table(path: str, categories: Mapping[str, int] | None = None) -> None:
    """Dump the category-name/code table next to a trained model for audit."""
    table = categories if categories is not None else CATEGORY_CODES
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("category,code\n")
        for name, code in sorted(table.items(), key=lambda kv: kv[1]):
            fh.write(f"{name},{code}\n")
