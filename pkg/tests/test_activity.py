import pytest

from sesinfer.activity import (
    CATEGORY_CODES,
    OTHER_CATEGORY,
    POI_CATEGORIES,
    ActivityEvent,
    build_poi_index,
    build_week_events,
    infer_activity,
    time_bin,
)
from sesinfer.geo import CellId, GeoPoint, GridSpec, cell_center
from sesinfer.ingest import PoiRecord, WeekSlice, week_start_of
from sesinfer.preprocess import StayPoint

TZ = 28800
GRID = GridSpec(GeoPoint(39.8, 116.2), 200.0, 20, 20)


def poi(cell, category, name="p"):
    return PoiRecord(name, category, cell_center(cell, GRID))


def stay_in(cell, arrival=0, departure=7200):
    return StayPoint(cell_center(cell, GRID), arrival, departure, cell, member_count=3)


def test_category_codes_are_alphabetical_and_stable():
    assert list(POI_CATEGORIES) == sorted(POI_CATEGORIES)
    assert [CATEGORY_CODES[c] for c in POI_CATEGORIES] == list(range(11))
    assert CATEGORY_CODES[OTHER_CATEGORY] == 11


class TestPoiIndex:
    def test_empty(self):
        idx = build_poi_index([], GRID)
        assert idx.counts == {}
        assert idx.skipped == 0

    def test_histogram(self):
        cell = CellId(4, 4)
        idx = build_poi_index(
            [poi(cell, "working"), poi(cell, "working"), poi(cell, "shopping")], GRID
        )
        bucket = idx.counts[cell]
        assert bucket[CATEGORY_CODES["working"]] == 2
        assert bucket[CATEGORY_CODES["shopping"]] == 1

    def test_outside_grid_skipped(self):
        outside = PoiRecord("x", "working", GeoPoint(10.0, 10.0))
        idx = build_poi_index([outside, poi(CellId(1, 1), "working")], GRID)
        assert idx.skipped == 1
        assert idx.total() == 1

    def test_total_plus_skipped_equals_input(self):
        pois = [poi(CellId(i % 5, i % 7), POI_CATEGORIES[i % 11], name=f"p{i}") for i in range(40)]
        pois.append(PoiRecord("far", "working", GeoPoint(0.0, 0.0)))
        pois.append(PoiRecord("untagged", "none", cell_center(CellId(2, 2), GRID)))
        idx = build_poi_index(pois, GRID)
        assert idx.total() + idx.skipped == len(pois)


class TestInferActivity:
    def test_empty_neighborhood_gives_other(self):
        idx = build_poi_index([], GRID)
        assert infer_activity(stay_in(CellId(5, 5)), idx, GRID) == OTHER_CATEGORY

    def test_majority_wins(self):
        cell = CellId(5, 5)
        pois = [poi(cell, "working", f"w{i}") for i in range(5)]
        pois += [poi(CellId(5, 6), "shopping", f"s{i}") for i in range(2)]
        idx = build_poi_index(pois, GRID)
        assert infer_activity(stay_in(cell), idx, GRID) == "working"

    def test_tie_breaks_to_smaller_code(self):
        cell = CellId(5, 5)
        pois = [poi(cell, "education", f"e{i}") for i in range(3)]
        pois += [poi(cell, "traffic", f"t{i}") for i in range(3)]
        idx = build_poi_index(pois, GRID)
        assert infer_activity(stay_in(cell), idx, GRID) == "education"

    def test_neighbors_count_even_without_center_pois(self):
        idx = build_poi_index([poi(CellId(5, 6), "lodging")], GRID)
        assert infer_activity(stay_in(CellId(5, 5)), idx, GRID) == "lodging"

    def test_center_cell_switch(self):
        cell = CellId(5, 5)
        idx = build_poi_index([poi(cell, "residence")], GRID)
        assert infer_activity(stay_in(cell), idx, GRID, include_center=True) == "residence"
        assert infer_activity(stay_in(cell), idx, GRID, include_center=False) == OTHER_CATEGORY

    def test_permutation_invariant(self):
        cell = CellId(5, 5)
        pois = [poi(cell, "shopping"), poi(cell, "working"), poi(cell, "working")]
        idx_fwd = build_poi_index(pois, GRID)
        idx_rev = build_poi_index(pois[::-1], GRID)
        assert infer_activity(stay_in(cell), idx_fwd, GRID) == infer_activity(stay_in(cell), idx_rev, GRID)


class TestTimeBin:
    WEEK = week_start_of(1_600_000_000, TZ)  # local Monday 00:00

    def test_monday_morning(self):
        assert time_bin(self.WEEK + 9 * 3600 + 600, TZ) == 9

    def test_saturday_morning(self):
        assert time_bin(self.WEEK + 5 * 86400 + 9 * 3600, TZ) == 33

    def test_sunday_late_night(self):
        assert time_bin(self.WEEK + 6 * 86400 + 23 * 3600 + 59 * 60, TZ) == 47

    def test_covers_exactly_48_bins_over_a_week(self):
        bins = {time_bin(self.WEEK + h * 3600, TZ) for h in range(7 * 24)}
        assert bins == set(range(48))


class TestBuildWeekEvents:
    WEEK = week_start_of(1_600_000_000, TZ)

    def _week(self):
        return WeekSlice("u", self.WEEK, ())

    def test_no_stays(self):
        days = build_week_events(self._week(), [], build_poi_index([], GRID), GRID, TZ)
        assert [len(d) for d in days] == [0] * 7

    def test_three_stays_on_day_zero_ordered(self):
        stays = [
            stay_in(CellId(1, 1), self.WEEK + 7 * 3600, self.WEEK + 9 * 3600),
            stay_in(CellId(2, 2), self.WEEK + 1 * 3600, self.WEEK + 3 * 3600),
            stay_in(CellId(3, 3), self.WEEK + 11 * 3600, self.WEEK + 13 * 3600),
        ]
        days = build_week_events(self._week(), stays, build_poi_index([], GRID), GRID, TZ)
        assert len(days[0]) == 3
        assert [e.stay.arrival_ts for e in days[0]] == sorted(s.arrival_ts for s in stays)
        assert all(len(d) == 0 for d in days[1:])

    def test_midnight_crossing_stay_belongs_to_arrival_day(self):
        crossing = stay_in(CellId(1, 1), self.WEEK + 22 * 3600, self.WEEK + 30 * 3600)
        days = build_week_events(self._week(), [crossing], build_poi_index([], GRID), GRID, TZ)
        assert len(days[0]) == 1
        assert len(days[1]) == 0
        assert days[0][0].day_index == 0

    def test_event_carries_bin_and_category_code(self):
        cell = CellId(4, 4)
        idx = build_poi_index([poi(cell, "residence")], GRID)
        stays = [stay_in(cell, self.WEEK + 20 * 3600, self.WEEK + 22 * 3600)]
        days = build_week_events(self._week(), stays, idx, GRID, TZ)
        event = days[0][0]
        assert isinstance(event, ActivityEvent)
        assert event.category == "residence"
        assert event.time_bin == 20
        assert event.category_code == CATEGORY_CODES["residence"]
