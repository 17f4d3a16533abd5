"""CSV loaders and writers for trajectories, POIs and house prices.

All three files are UTF-8 CSV with a fixed header:

    trajectories: user_id,lat,lon,ts      (ts = integer unix seconds)
    pois:         name,category,lat,lon
    prices:       name,price,lat,lon      (price = positive decimal)

Malformed lines are counted and reported rather than silently dropped;
parsing aborts only when more than 1% of data lines are bad.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .activity import NONE_CATEGORY, POI_CATEGORIES, SECONDS_PER_DAY, SECONDS_PER_WEEK
from .geo import GeoPoint

MALFORMED_ABORT_RATIO = 0.01

_VALID_POI_CATEGORIES = set(POI_CATEGORIES) | {NONE_CATEGORY}


class FormatError(ValueError):
    """A malformed input line (or too many of them)."""

    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


@dataclass(frozen=True)
class TrajectoryRecord:
    user_id: str
    point: GeoPoint
    ts: int


@dataclass(frozen=True)
class PoiRecord:
    name: str
    category: str
    point: GeoPoint


@dataclass(frozen=True)
class PriceRecord:
    name: str
    price: float
    point: GeoPoint


@dataclass(frozen=True)
class WeekSlice:
    """One user's records inside one Monday-aligned local week."""

    user_id: str
    week_start: int  # unix seconds (UTC) of local Monday 00:00
    records: tuple[TrajectoryRecord, ...]


@dataclass
class TrajectoryParse:
    """Per-user record streams plus the malformed-line report."""

    streams: dict[str, list[TrajectoryRecord]] = field(default_factory=dict)
    malformed: list[tuple[int, str]] = field(default_factory=list)


def _check_ratio(malformed: list[tuple[int, str]], total_lines: int) -> None:
    if total_lines and len(malformed) / total_lines > MALFORMED_ABORT_RATIO:
        line_no, reason = malformed[0]
        raise FormatError(line_no, f"{reason} ({len(malformed)} of {total_lines} lines malformed)")


def _read_rows(path: str, header: Sequence[str]):
    """Yield (line_no, row) for data rows; validates the header line."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            first = next(reader)
        except StopIteration:
            return
        if [h.strip() for h in first] != list(header):
            raise FormatError(1, f"expected header {','.join(header)!r}, got {','.join(first)!r}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            yield line_no, row


def parse_trajectories(path: str) -> TrajectoryParse:
    """Load trajectory records grouped by user and sorted by timestamp.

    Within a user, duplicate timestamps collapse to the first occurrence so
    every stream is strictly increasing in time.
    """
    result = TrajectoryParse()
    total = 0
    for line_no, row in _read_rows(path, ("user_id", "lat", "lon", "ts")):
        total += 1
        try:
            if len(row) != 4:
                raise ValueError(f"expected 4 fields, got {len(row)}")
            user_id = row[0]
            if not user_id:
                raise ValueError("empty user_id")
            point = GeoPoint(float(row[1]), float(row[2]))
            ts = int(row[3])
            if ts < 0:
                raise ValueError(f"negative timestamp {ts}")
        except ValueError as exc:
            result.malformed.append((line_no, str(exc)))
            continue
        result.streams.setdefault(user_id, []).append(TrajectoryRecord(user_id, point, ts))
    _check_ratio(result.malformed, total)
    for user_id, records in result.streams.items():
        records.sort(key=lambda r: r.ts)
        deduped: list[TrajectoryRecord] = []
        for rec in records:
            if deduped and rec.ts == deduped[-1].ts:
                continue
            deduped.append(rec)
        result.streams[user_id] = deduped
    return result


def parse_pois(path: str) -> tuple[list[PoiRecord], list[tuple[int, str]]]:
    """Load POI records; unknown categories are malformed lines."""
    records: list[PoiRecord] = []
    malformed: list[tuple[int, str]] = []
    total = 0
    for line_no, row in _read_rows(path, ("name", "category", "lat", "lon")):
        total += 1
        try:
            if len(row) != 4:
                raise ValueError(f"expected 4 fields, got {len(row)}")
            category = row[1]
            if category not in _VALID_POI_CATEGORIES:
                raise ValueError(f"unknown POI category {category!r}")
            records.append(PoiRecord(row[0], category, GeoPoint(float(row[2]), float(row[3]))))
        except ValueError as exc:
            malformed.append((line_no, str(exc)))
    _check_ratio(malformed, total)
    return records, malformed


def parse_prices(path: str) -> tuple[list[PriceRecord], list[tuple[int, str]]]:
    """Load house-price records; non-positive prices are malformed lines."""
    records: list[PriceRecord] = []
    malformed: list[tuple[int, str]] = []
    total = 0
    for line_no, row in _read_rows(path, ("name", "price", "lat", "lon")):
        total += 1
        try:
            if len(row) != 4:
                raise ValueError(f"expected 4 fields, got {len(row)}")
            price = float(row[1])
            if price <= 0.0:
                raise ValueError(f"non-positive price {price}")
            records.append(PriceRecord(row[0], price, GeoPoint(float(row[2]), float(row[3]))))
        except ValueError as exc:
            malformed.append((line_no, str(exc)))
    _check_ratio(malformed, total)
    return records, malformed


def week_start_of(ts: int, tz_offset_s: int) -> int:
    """Unix second (UTC) of the local Monday 00:00 containing ``ts``."""
    local = ts + tz_offset_s
    weekday = (local // SECONDS_PER_DAY + 3) % 7  # Monday = 0
    local_start = (local // SECONDS_PER_DAY - weekday) * SECONDS_PER_DAY
    return local_start - tz_offset_s


def segment_weeks(
    stream: Sequence[TrajectoryRecord],
    tz_offset_s: int,
    min_records: int = 10,
) -> list[WeekSlice]:
    """Bucket a time-sorted stream into Monday-aligned local weeks.

    Weeks with fewer than ``min_records`` records are discarded outright;
    they carry too little signal to yield a usable training instance.
    """
    slices: list[WeekSlice] = []
    bucket: list[TrajectoryRecord] = []
    current_start: int | None = None

    def flush() -> None:
        if current_start is not None and len(bucket) >= min_records:
            slices.append(WeekSlice(bucket[0].user_id, current_start, tuple(bucket)))

    for rec in stream:
        start = week_start_of(rec.ts, tz_offset_s)
        if start != current_start:
            flush()
            bucket = []
            current_start = start
        bucket.append(rec)
    flush()
    return slices


def _fmt(x: float) -> str:
    return repr(float(x))


def write_trajectories(path: str, records: Iterable[TrajectoryRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("user_id,lat,lon,ts\n")
        for r in records:
            fh.write(f"{r.user_id},{_fmt(r.point.lat)},{_fmt(r.point.lon)},{r.ts}\n")


def write_pois(path: str, records: Iterable[PoiRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("name,category,lat,lon\n")
        for r in records:
            fh.write(f"{r.name},{r.category},{_fmt(r.point.lat)},{_fmt(r.point.lon)}\n")


def write_prices(path: str, records: Iterable[PriceRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("name,price,lat,lon\n")
        for r in records:
            fh.write(f"{r.name},{_fmt(r.price)},{_fmt(r.point.lat)},{_fmt(r.point.lon)}\n")
