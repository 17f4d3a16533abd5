import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sesinfer.geo import CellId, GeoPoint, GridSpec, haversine_m
from sesinfer.ingest import TrajectoryRecord
from sesinfer.preprocess import (
    EmptyPriceTable,
    NoNightActivity,
    StayPoint,
    derive_label,
    detect_stay_points,
    filter_noise,
    infer_home,
    price_at,
)

RAD = math.pi / 180.0
M_PER_DEG = 6_371_000.0 * RAD  # meters per degree of latitude


def rec(ts, north_m=0.0, east_m=0.0, user="u"):
    return TrajectoryRecord(user, GeoPoint(north_m / M_PER_DEG, east_m / (M_PER_DEG * math.cos(0.0))), ts)


def stay(arrival, departure, cell, lat=0.0, lon=0.0):
    return StayPoint(GeoPoint(lat, lon), arrival, departure, cell, member_count=2)


class TestFilterNoise:
    def test_stationary_unchanged(self):
        records = [rec(t * 60) for t in range(10)]
        assert filter_noise(records, 50.0) == records

    def test_teleport_removed_and_successors_rechecked(self):
        # hand trace: point 2 jumps 10 km in 1 s and is dropped; point 3 sits
        # near point 1, so it survives the re-check against the last kept point
        records = [
            rec(0, north_m=0.0),
            rec(60, north_m=30.0),
            rec(61, north_m=10_030.0),
            rec(120, north_m=60.0),
        ]
        kept = filter_noise(records, v_max=50.0)
        assert [r.ts for r in kept] == [0, 60, 120]

    def test_empty_input(self):
        assert filter_noise([], 50.0) == []

    def test_non_increasing_timestamps_dropped(self):
        records = [rec(0), rec(60), TrajectoryRecord("u", GeoPoint(0.0, 0.0), 60)]
        assert [r.ts for r in filter_noise(records, 50.0)] == [0, 60]

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 5000), st.floats(-2000, 2000)), min_size=0, max_size=40))
    def test_idempotent(self, raw):
        raw = sorted(set(raw), key=lambda x: x[0])
        records = [rec(ts, north_m=nm) for ts, nm in raw]
        once = filter_noise(records, v_max=30.0)
        assert filter_noise(once, v_max=30.0) == once


from oracles import oracle_stays  # noqa: E402 - shared window-enumeration reference


class TestDetectStayPoints:
    def test_single_stay_covers_everything(self):
        records = [rec(t * 600, north_m=(t % 3) * 10.0) for t in range(12)]
        stays = detect_stay_points(records, 100.0, 3600.0)
        assert len(stays) == 1
        s = stays[0]
        assert (s.arrival_ts, s.departure_ts, s.member_count) == (0, 6600, 12)

    def test_constant_motion_yields_nothing(self):
        # 20 m/s: any within-radius run spans at most 5 s, far below S_t
        records = [rec(t, north_m=20.0 * t) for t in range(0, 600)]
        assert detect_stay_points(records, 100.0, 3600.0) == []

    def test_duration_must_strictly_exceed_threshold(self):
        records = [rec(0), rec(3600)]
        assert detect_stay_points(records, 100.0, 3600.0) == []
        records = [rec(0), rec(3601)]
        assert len(detect_stay_points(records, 100.0, 3600.0)) == 1

    def test_matches_window_oracle_on_random_traces(self):
        rng = np.random.default_rng(11)
        for _ in range(60):
            times = np.cumsum(rng.integers(10, 900, size=50))
            offsets = np.cumsum(rng.normal(0, 40, size=50))
            records = [rec(int(t), north_m=float(o)) for t, o in zip(times, offsets)]
            for s_d, s_t in ((100.0, 1800.0), (50.0, 600.0), (200.0, 3600.0)):
                got = [
                    (s.arrival_ts, s.departure_ts, round(s.centroid.lat, 12), round(s.centroid.lon, 12), s.member_count)
                    for s in detect_stay_points(records, s_d, s_t)
                ]
                assert got == oracle_stays(records, s_d, s_t)

    def test_stay_count_trend_non_increasing_in_duration_threshold(self):
        # Aggregate trend only: the anchor-advance rule can emit MORE stays
        # on a single trace under a larger threshold (an early emission
        # consumes points that otherwise regroup), so monotonicity is
        # asserted over a corpus, matching how instance counts shrink as
        # the threshold grows.
        rng = np.random.default_rng(5)
        totals = [0, 0, 0, 0]
        for _ in range(20):
            times = np.cumsum(rng.integers(20, 600, size=60))
            offsets = np.cumsum(rng.normal(0, 30, size=60))
            records = [rec(int(t), north_m=float(o)) for t, o in zip(times, offsets)]
            for i, s_t in enumerate((600.0, 1800.0, 3600.0, 7200.0)):
                totals[i] += len(detect_stay_points(records, 100.0, s_t))
        assert totals == sorted(totals, reverse=True)

    def test_every_stay_satisfies_radius_and_duration(self):
        rng = np.random.default_rng(3)
        times = np.cumsum(rng.integers(10, 900, size=80))
        offsets = np.cumsum(rng.normal(0, 50, size=80))
        records = [rec(int(t), north_m=float(o)) for t, o in zip(times, offsets)]
        s_d, s_t = 120.0, 1200.0
        stays = detect_stay_points(records, s_d, s_t)
        by_ts = {r.ts: r for r in records}
        for s in stays:
            assert s.duration_s > s_t
            anchor = by_ts[s.arrival_ts]
            members = [r for r in records if s.arrival_ts <= r.ts <= s.departure_ts]
            assert all(haversine_m(anchor.point, m.point) <= s_d for m in members)


NIGHT = dict(tz_offset_s=0, night_start_hour=22, night_end_hour=7)
DAY0 = 86400 * 4  # some Friday; absolute day does not matter with tz 0


class TestInferHome:
    def test_single_night_stay(self):
        a = CellId(3, 4)
        stays = [stay(DAY0 + 23 * 3600, DAY0 + 30 * 3600, a)]
        assert infer_home(stays, **NIGHT) == a

    def test_longer_night_presence_wins(self):
        a, b = CellId(1, 1), CellId(2, 2)
        stays = [
            stay(DAY0 + 22 * 3600, DAY0 + 24 * 3600, a),          # 2 h overlap
            stay(DAY0 + 24 * 3600, DAY0 + 29 * 3600, b),          # 5 h overlap
        ]
        assert infer_home(stays, **NIGHT) == b

    def test_daytime_only_raises(self):
        stays = [stay(DAY0 + 9 * 3600, DAY0 + 17 * 3600, CellId(0, 0))]
        with pytest.raises(NoNightActivity):
            infer_home(stays, **NIGHT)

    def test_overlap_is_summed_across_nights(self):
        a, b = CellId(1, 1), CellId(2, 2)
        stays = [
            stay(DAY0 + 22 * 3600, DAY0 + 25 * 3600, a),              # 3 h one night
            stay(DAY0 + 23 * 3600 + 86400, DAY0 + 25 * 3600 + 86400, b),   # 2 h
            stay(DAY0 + 23 * 3600 + 2 * 86400, DAY0 + 25 * 3600 + 2 * 86400, b),  # +2 h
        ]
        assert infer_home(stays, **NIGHT) == b

    def test_count_tiebreak_then_cell_order(self):
        a, b = CellId(5, 5), CellId(1, 9)
        stays = [
            stay(DAY0 + 23 * 3600, DAY0 + 27 * 3600, a),  # one 4 h stay
            stay(DAY0 + 23 * 3600 + 86400, DAY0 + 25 * 3600 + 86400, b),
            stay(DAY0 + 25 * 3600 + 86400, DAY0 + 27 * 3600 + 86400, b),  # two 2 h stays
        ]
        assert infer_home(stays, **NIGHT) == b  # equal duration, higher count
        stays_equal = [
            stay(DAY0 + 23 * 3600, DAY0 + 25 * 3600, a),
            stay(DAY0 + 23 * 3600 + 86400, DAY0 + 25 * 3600 + 86400, CellId(1, 9)),
        ]
        assert infer_home(stays_equal, **NIGHT) == CellId(1, 9)  # smaller (row, col)

    def test_rank_by_count_switch(self):
        a, b = CellId(1, 1), CellId(2, 2)
        stays = [
            stay(DAY0 + 22 * 3600, DAY0 + 28 * 3600, a),  # one 6 h stay
            stay(DAY0 + 23 * 3600 + 86400, DAY0 + 24 * 3600 + 86400, b),
            stay(DAY0 + 25 * 3600 + 86400, DAY0 + 26 * 3600 + 86400, b),  # two 1 h stays
        ]
        assert infer_home(stays, **NIGHT) == a
        assert infer_home(stays, rank_by="count", **NIGHT) == b


class TestPriceAt:
    def grid(self):
        return GridSpec(GeoPoint(39.8, 116.2), 200.0, 20, 20)

    def test_single_record(self):
        from sesinfer.ingest import PriceRecord

        g = self.grid()
        prices = [PriceRecord("x", 42_000.0, GeoPoint(39.81, 116.21))]
        assert price_at(CellId(10, 10), prices, g) == 42_000.0

    def test_nearest_wins(self):
        from sesinfer.geo import cell_center
        from sesinfer.ingest import PoiRecord, PriceRecord

        g = self.grid()
        home = CellId(5, 5)
        center = cell_center(home, g)
        near = PriceRecord("near", 30_000.0, GeoPoint(center.lat + 100 / M_PER_DEG, center.lon))
        far = PriceRecord("far", 90_000.0, GeoPoint(center.lat + 5000 / M_PER_DEG, center.lon))
        assert price_at(home, [far, near], g) == 30_000.0

    def test_tie_breaks_to_smaller_price(self):
        from sesinfer.geo import cell_center
        from sesinfer.ingest import PriceRecord

        g = self.grid()
        home = CellId(5, 5)
        center = cell_center(home, g)
        p = GeoPoint(center.lat, center.lon)
        assert price_at(home, [PriceRecord("a", 50_000.0, p), PriceRecord("b", 40_000.0, p)], g) == 40_000.0

    def test_empty_table(self):
        with pytest.raises(EmptyPriceTable):
            price_at(CellId(0, 0), [], self.grid())


class TestDeriveLabel:
    MIN, MAX = 10_588.0, 113_224.0

    def test_binary_split_brackets_the_midpoint(self):
        midpoint = (self.MIN + self.MAX) / 2  # 61,906
        assert derive_label(midpoint - 1.0, self.MIN, self.MAX, 2).class_index == 0
        assert derive_label(midpoint + 1.0, self.MIN, self.MAX, 2).class_index == 1
        assert derive_label(61_890.0, self.MIN, self.MAX, 2).class_index == 0

    def test_boundaries(self):
        assert derive_label(self.MIN, self.MIN, self.MAX, 3).class_index == 0
        assert derive_label(self.MAX, self.MIN, self.MAX, 3).class_index == 2

    def test_out_of_range_clamps(self):
        assert derive_label(0.0, self.MIN, self.MAX, 4).class_index == 0
        assert derive_label(1e9, self.MIN, self.MAX, 4).class_index == 3

    @given(
        st.floats(min_value=0.0, max_value=200_000.0),
        st.floats(min_value=0.0, max_value=200_000.0),
        st.integers(min_value=2, max_value=5),
    )
    def test_monotone_in_price(self, p1, p2, c):
        lo, hi = sorted((p1, p2))
        l1 = derive_label(lo, self.MIN, self.MAX, c).class_index
        l2 = derive_label(hi, self.MIN, self.MAX, c).class_index
        assert l1 <= l2

    def test_rejects_bad_class_count(self):
        with pytest.raises(ValueError):
            derive_label(50_000.0, self.MIN, self.MAX, 6)
