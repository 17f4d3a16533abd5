"""Trajectory cleaning, stay-point extraction, and class-label derivation.

The pipeline here turns a week of raw GPS records into dwell episodes and
turns a user's nighttime dwell pattern into a home cell, a looked-up house
price, and finally a socioeconomic class index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .activity import SECONDS_PER_DAY
from .geo import CellId, GeoPoint, GridSpec, OutOfArea, cell_center, cell_of, haversine_m
from .ingest import PriceRecord, TrajectoryRecord


class NoNightActivity(ValueError):
    """No stay overlaps any nighttime window, so home cannot be inferred."""


class EmptyPriceTable(ValueError):
    """Price lookup requested against an empty price list."""


@dataclass(frozen=True)
class StayPoint:
    """A dwell episode: consecutive records within the stay radius for
    longer than the stay duration threshold."""

    centroid: GeoPoint
    arrival_ts: int
    departure_ts: int
    cell: CellId | None  # None marks an out-of-area centroid
    member_count: int

    @property
    def duration_s(self) -> int:
        return self.departure_ts - self.arrival_ts


@dataclass(frozen=True)
class ClassLabel:
    class_index: int
    num_classes: int

    def __post_init__(self) -> None:
        if not 0 <= self.class_index < self.num_classes:
            raise ValueError(f"class {self.class_index} outside [0, {self.num_classes})")


def filter_noise(records: Sequence[TrajectoryRecord], v_max: float) -> list[TrajectoryRecord]:
    """Drop teleport artifacts with a single forward pass.

    Each examined point's speed is computed against the last *kept* point;
    points faster than ``v_max`` (m/s) or not strictly later in time are
    removed. Filtering is idempotent.
    """
    if v_max <= 0.0:
        raise ValueError("v_max must be positive")
    kept: list[TrajectoryRecord] = []
    for rec in records:
        if not kept:
            kept.append(rec)
            continue
        prev = kept[-1]
        dt = rec.ts - prev.ts
        if dt <= 0:
            continue
        if haversine_m(prev.point, rec.point) / dt > v_max:
            continue
        kept.append(rec)
    return kept


def detect_stay_points(
    records: Sequence[TrajectoryRecord],
    stay_radius_m: float,
    stay_duration_s: float,
    grid: GridSpec | None = None,
) -> list[StayPoint]:
    """Anchor-scan stay-point extraction.

    From anchor ``i``, successors are absorbed while they remain within
    ``stay_radius_m`` of the anchor point. If the absorbed span lasts longer
    than ``stay_duration_s`` a stay point covering it is emitted and the
    anchor jumps past it; otherwise the anchor advances by one.
    """
    stays: list[StayPoint] = []
    n = len(records)
    i = 0
    while i < n:
        anchor = records[i].point
        j = i + 1
        while j < n and haversine_m(anchor, records[j].point) <= stay_radius_m:
            j += 1
        last = j - 1
        if records[last].ts - records[i].ts > stay_duration_s:
            members = records[i : last + 1]
            centroid = GeoPoint(
                math.fsum(r.point.lat for r in members) / len(members),
                math.fsum(r.point.lon for r in members) / len(members),
            )
            cell: CellId | None = None
            if grid is not None:
                try:
                    cell = cell_of(centroid, grid)
                except OutOfArea:
                    cell = None
            stays.append(
                StayPoint(
                    centroid=centroid,
                    arrival_ts=records[i].ts,
                    departure_ts=records[last].ts,
                    cell=cell,
                    member_count=len(members),
                )
            )
            i = last + 1
        else:
            i += 1
    return stays


def _night_overlap_s(
    arrival: int,
    departure: int,
    tz_offset_s: int,
    night_start_hour: int,
    night_end_hour: int,
) -> int:
    """Seconds of [arrival, departure) falling in nightly local windows.

    The window runs from ``night_start_hour`` to ``night_end_hour`` the next
    morning (22:00-07:00 by default).
    """
    lo = arrival + tz_offset_s
    hi = departure + tz_offset_s
    total = 0
    first_day = lo // SECONDS_PER_DAY - 1
    last_day = hi // SECONDS_PER_DAY
    for day in range(first_day, last_day + 1):
        w_lo = day * SECONDS_PER_DAY + night_start_hour * 3600
        w_hi = (day + 1) * SECONDS_PER_DAY + night_end_hour * 3600
        total += max(0, min(hi, w_hi) - max(lo, w_lo))
    return total


def infer_home(
    stays: Iterable[StayPoint],
    tz_offset_s: int,
    night_start_hour: int = 22,
    night_end_hour: int = 7,
    rank_by: str = "duration",
) -> CellId:
    """Cell with the greatest nighttime stay presence across all weeks.

    ``rank_by`` selects the primary criterion: total overlapped duration
    (default) or the count of night-overlapping stays; the other serves as
    tiebreak, then smaller (row, col) wins.
    """
    if rank_by not in ("duration", "count"):
        raise ValueError(f"rank_by must be 'duration' or 'count', got {rank_by!r}")
    duration: dict[CellId, int] = {}
    count: dict[CellId, int] = {}
    for stay in stays:
        if stay.cell is None:
            continue
        overlap = _night_overlap_s(
            stay.arrival_ts, stay.departure_ts, tz_offset_s, night_start_hour, night_end_hour
        )
        if overlap > 0:
            duration[stay.cell] = duration.get(stay.cell, 0) + overlap
            count[stay.cell] = count.get(stay.cell, 0) + 1
    if not duration:
        raise NoNightActivity("no stay overlaps the night window")
    if rank_by == "duration":
        key = lambda c: (-duration[c], -count[c], c.row, c.col)
    else:
        key = lambda c: (-count[c], -duration[c], c.row, c.col)
    return min(duration, key=key)


def price_at(home: CellId, prices: Sequence[PriceRecord], grid: GridSpec) -> float:
    """Price of the record nearest the home cell's center.

    Nearest-neighbor assignment is exactly the Voronoi-cell lookup; distance
    ties resolve to the smaller price.
    """
    if not prices:
        raise EmptyPriceTable("no price records")
    center = cell_center(home, grid)
    best = min(prices, key=lambda p: (haversine_m(center, p.point), p.price))
    return best.price


def derive_label(price: float, price_min: float, price_max: float, num_classes: int) -> ClassLabel:
    """Class index of the evenly partitioned price interval containing ``price``.

    Out-of-range prices clamp to the nearest boundary, so the function is
    total and monotone non-decreasing in price.
    """
    if not price_min < price_max:
        raise ValueError("price_min must be below price_max")
    if not 2 <= num_classes <= 5:
        raise ValueError(f"num_classes must be in [2, 5], got {num_classes}")
    clamped = min(max(price, price_min), price_max)
    width = (price_max - price_min) / num_classes
    index = min(num_classes - 1, int((clamped - price_min) // width))
    return ClassLabel(index, num_classes)
