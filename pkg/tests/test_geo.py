import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sesinfer.geo import (
    EARTH_RADIUS_M,
    CellId,
    GeoPoint,
    GridSpec,
    OutOfArea,
    cell_center,
    cell_of,
    haversine_m,
    local_offsets_m,
    neighborhood,
)

RAD = math.pi / 180.0

coords = st.tuples(
    st.floats(min_value=-85.0, max_value=85.0),
    st.floats(min_value=-179.0, max_value=179.0),
)


def grid(rows=10, cols=10, cell=200.0, origin=(39.8, 116.2)):
    return GridSpec(GeoPoint(*origin), cell, rows, cols)


def offset_point(origin: GeoPoint, east_m: float, north_m: float) -> GeoPoint:
    lat = origin.lat + north_m / (EARTH_RADIUS_M * RAD)
    lon = origin.lon + east_m / (EARTH_RADIUS_M * RAD * math.cos(origin.lat * RAD))
    return GeoPoint(lat, lon)


class TestHaversine:
    def test_identity(self):
        p = GeoPoint(12.34, 56.78)
        assert haversine_m(p, p) == 0.0

    def test_one_degree_on_equator(self):
        # (pi/180) * R = 111,195 m
        d = haversine_m(GeoPoint(0, 0), GeoPoint(0, 1))
        assert d == pytest.approx(111_195.0, rel=1e-3)

    def test_quarter_meridian(self):
        # (pi/2) * R
        d = haversine_m(GeoPoint(0, 0), GeoPoint(90, 0))
        assert d == pytest.approx(math.pi / 2 * EARTH_RADIUS_M, rel=1e-3)

    @given(coords, coords)
    def test_symmetric_nonnegative(self, a, b):
        pa, pb = GeoPoint(*a), GeoPoint(*b)
        d_ab = haversine_m(pa, pb)
        assert d_ab >= 0.0
        assert d_ab == pytest.approx(haversine_m(pb, pa), abs=1e-9)

    @settings(max_examples=200)
    @given(coords, coords, coords)
    def test_triangle_inequality(self, a, b, c):
        pa, pb, pc = GeoPoint(*a), GeoPoint(*b), GeoPoint(*c)
        lhs = haversine_m(pa, pc)
        rhs = haversine_m(pa, pb) + haversine_m(pb, pc)
        assert lhs <= rhs * (1.0 + 1e-6) + 1e-6

    def test_rejects_bad_coordinates(self):
        with pytest.raises(ValueError):
            GeoPoint(91.0, 0.0)
        with pytest.raises(ValueError):
            GeoPoint(0.0, 181.0)


class TestCellOf:
    def test_origin_maps_to_zero_cell(self):
        g = grid()
        assert cell_of(g.origin, g) == CellId(0, 0)

    def test_250m_east_of_origin(self):
        g = grid(cell=200.0)
        p = offset_point(g.origin, east_m=250.0, north_m=0.0)
        assert cell_of(p, g) == CellId(0, 1)

    def test_one_meter_south_is_out_of_area(self):
        g = grid()
        p = offset_point(g.origin, east_m=0.0, north_m=-1.0)
        with pytest.raises(OutOfArea):
            cell_of(p, g)

    def test_beyond_far_corner_is_out_of_area(self):
        g = grid(rows=5, cols=5, cell=100.0)
        p = offset_point(g.origin, east_m=501.0, north_m=50.0)
        with pytest.raises(OutOfArea):
            cell_of(p, g)

    @given(
        st.integers(min_value=0, max_value=9),
        st.integers(min_value=0, max_value=9),
        st.floats(min_value=-99.0, max_value=99.0),
        st.floats(min_value=-99.0, max_value=99.0),
    )
    def test_point_near_cell_center_maps_to_that_cell(self, row, col, de, dn):
        # displacement under cell_size/2 in each axis stays inside the cell
        g = grid(cell=200.0)
        center = cell_center(CellId(row, col), g)
        east0, north0 = local_offsets_m(center, g.origin)
        p = offset_point(g.origin, east0 + de, north0 + dn)
        assert cell_of(p, g) == CellId(row, col)


class TestNeighborhood:
    def test_interior_has_nine(self):
        g = grid()
        block = neighborhood(CellId(5, 5), g)
        assert len(block) == 9
        assert CellId(5, 5) in block

    def test_corner_has_four(self):
        g = grid()
        assert len(neighborhood(CellId(0, 0), g)) == 4

    def test_edge_has_six(self):
        g = grid(rows=10, cols=20)
        block = neighborhood(CellId(0, 5), g)
        assert len(block) == 6
        assert block == {CellId(r, c) for r in (0, 1) for c in (4, 5, 6)}

    def test_exclude_center_switch(self):
        g = grid()
        block = neighborhood(CellId(5, 5), g, include_center=False)
        assert len(block) == 8
        assert CellId(5, 5) not in block

    @given(st.integers(min_value=0, max_value=9), st.integers(min_value=0, max_value=9))
    def test_size_bounds_and_center_membership(self, row, col):
        g = grid()
        block = neighborhood(CellId(row, col), g)
        assert CellId(row, col) in block
        assert 4 <= len(block) <= 9

    def test_outside_cell_rejected(self):
        with pytest.raises(OutOfArea):
            neighborhood(CellId(10, 0), grid())


def test_cell_center_round_trips_through_cell_of():
    g = grid(rows=30, cols=30, cell=150.0)
    for cell in (CellId(0, 0), CellId(29, 29), CellId(7, 21)):
        assert cell_of(cell_center(cell, g), g) == cell
