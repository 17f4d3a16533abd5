"""Geodesic distances and uniform-grid spatial indexing.

Distances use the spherical haversine formula with an Earth radius of
6,371,000 m. Grid indexing projects coordinates onto a local tangent plane
with an equirectangular approximation about the grid origin, which is
accurate to well under 0.5% at city scale and keeps cell lookup monotone
in latitude/longitude.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

EARTH_RADIUS_M = 6_371_000.0

_RAD = math.pi / 180.0


class OutOfArea(ValueError):
    """Raised when a point falls outside a grid's bounding box."""


@dataclass(frozen=True)
class GeoPoint:
    """WGS-84 coordinate pair in decimal degrees."""

    lat: float
    lon: float

    def __post_init__(self) -> None:
        if not (-90.0 <= self.lat <= 90.0):
            raise ValueError(f"latitude {self.lat} outside [-90, 90]")
        if not (-180.0 <= self.lon <= 180.0):
            raise ValueError(f"longitude {self.lon} outside [-180, 180]")


@dataclass(frozen=True, order=True)
class CellId:
    """Grid cell index; ``row`` grows northward, ``col`` eastward."""

    row: int
    col: int


@dataclass(frozen=True)
class GridSpec:
    """Uniform square grid anchored at its south-west corner.

    Cell (0, 0) covers the ``cell_size_m``-sided square immediately
    north-east of ``origin``.
    """

    origin: GeoPoint
    cell_size_m: float
    rows: int
    cols: int

    def __post_init__(self) -> None:
        if self.cell_size_m <= 0.0:
            raise ValueError("cell_size_m must be positive")
        if self.rows < 1 or self.cols < 1:
            raise ValueError("grid needs at least one row and one column")

    def contains(self, cell: CellId) -> bool:
        return 0 <= cell.row < self.rows and 0 <= cell.col < self.cols


def haversine_m(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance between two points, in meters.

    Symmetric and non-negative; exactly 0 for identical inputs.
    """
    lat1 = a.lat * _RAD
    lat2 = b.lat * _RAD
    s_lat = math.sin((lat2 - lat1) * 0.5)
    s_lon = math.sin((b.lon - a.lon) * _RAD * 0.5)
    h = s_lat * s_lat + math.cos(lat1) * math.cos(lat2) * s_lon * s_lon
    # clamp guards rounding just above 1 for near-antipodal pairs
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def local_offsets_m(p: GeoPoint, origin: GeoPoint) -> tuple[float, float]:
    """(east, north) offsets of ``p`` from ``origin`` on the local tangent plane."""
    east = (p.lon - origin.lon) * _RAD * EARTH_RADIUS_M * math.cos(origin.lat * _RAD)
    north = (p.lat - origin.lat) * _RAD * EARTH_RADIUS_M
    return east, north


def cell_of(p: GeoPoint, grid: GridSpec) -> CellId:
    """Map a point to its grid cell.

    Raises OutOfArea for points outside the grid bounding box, including
    points even marginally south or west of the origin.
    """
    east, north = local_offsets_m(p, grid.origin)
    row = math.floor(north / grid.cell_size_m)
    col = math.floor(east / grid.cell_size_m)
    if not (0 <= row < grid.rows and 0 <= col < grid.cols):
        raise OutOfArea(f"point ({p.lat}, {p.lon}) maps to ({row}, {col}) outside {grid.rows}x{grid.cols} grid")
    return CellId(row, col)


def cell_center(cell: CellId, grid: GridSpec) -> GeoPoint:
    """Inverse of the grid projection, evaluated at the cell midpoint."""
    north = (cell.row + 0.5) * grid.cell_size_m
    east = (cell.col + 0.5) * grid.cell_size_m
    lat = grid.origin.lat + north / (EARTH_RADIUS_M * _RAD)
    lon = grid.origin.lon + east / (EARTH_RADIUS_M * _RAD * math.cos(grid.origin.lat * _RAD))
    return GeoPoint(lat, lon)


def neighborhood(cell: CellId, grid: GridSpec, include_center: bool = True) -> set[CellId]:
    """The 3x3 block around ``cell``, clipped at the grid border.

    ``include_center`` keeps the cell itself in the set (the default);
    switching it off yields only the up-to-8 surrounding cells.
    """
    if not grid.contains(cell):
        raise OutOfArea(f"cell {cell} outside {grid.rows}x{grid.cols} grid")
    block = {
        CellId(r, c)
        for r in range(max(0, cell.row - 1), min(grid.rows, cell.row + 2))
        for c in range(max(0, cell.col - 1), min(grid.cols, cell.col + 2))
    }
    if not include_center:
        block.discard(cell)
    return block
