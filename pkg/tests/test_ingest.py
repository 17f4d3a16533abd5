import pytest

from sesinfer.activity import POI_CATEGORIES, SECONDS_PER_WEEK
from sesinfer.geo import GeoPoint
from sesinfer.ingest import (
    FormatError,
    TrajectoryRecord,
    parse_pois,
    parse_prices,
    parse_trajectories,
    segment_weeks,
    week_start_of,
    write_pois,
    write_prices,
    write_trajectories,
)

TZ = 28800  # +08:00


def rec(user, ts, lat=39.9, lon=116.3):
    return TrajectoryRecord(user, GeoPoint(lat, lon), ts)


class TestParseTrajectories:
    def test_empty_file(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("user_id,lat,lon,ts\n")
        result = parse_trajectories(str(path))
        assert result.streams == {}
        assert result.malformed == []

    def test_interleaved_users_sorted(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text(
            "user_id,lat,lon,ts\n"
            "u1,39.9,116.3,30\n"
            "u2,39.9,116.3,10\n"
            "u1,39.9,116.3,10\n"
            "u2,39.9,116.3,5\n"
        )
        result = parse_trajectories(str(path))
        assert [r.ts for r in result.streams["u1"]] == [10, 30]
        assert [r.ts for r in result.streams["u2"]] == [5, 10]

    def test_duplicate_timestamps_collapse_to_first(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("user_id,lat,lon,ts\nu,39.9,116.3,10\nu,39.0,116.0,10\nu,39.9,116.3,20\n")
        result = parse_trajectories(str(path))
        stream = result.streams["u"]
        assert [r.ts for r in stream] == [10, 20]
        assert stream[0].point.lat == 39.9

    def test_bad_latitude_counted(self, tmp_path):
        path = tmp_path / "t.csv"
        good = "".join(f"u,39.9,116.3,{i}\n" for i in range(200))
        path.write_text("user_id,lat,lon,ts\n" + good + "u,91.0,116.3,999\n")
        result = parse_trajectories(str(path))
        assert len(result.malformed) == 1
        assert len(result.streams["u"]) == 200

    def test_aborts_when_over_one_percent_malformed(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("user_id,lat,lon,ts\nu,91.0,116.3,1\nu,39.9,116.3,2\n")
        with pytest.raises(FormatError):
            parse_trajectories(str(path))

    def test_header_mismatch(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("uid,lat,lon,ts\n")
        with pytest.raises(FormatError):
            parse_trajectories(str(path))


class TestParsePoisAndPrices:
    def test_all_eleven_categories(self, tmp_path):
        path = tmp_path / "p.csv"
        lines = "".join(f"p{i},{cat},39.9,116.3\n" for i, cat in enumerate(POI_CATEGORIES))
        path.write_text("name,category,lat,lon\n" + lines)
        records, malformed = parse_pois(str(path))
        assert len(records) == 11
        assert malformed == []

    def test_unknown_category_is_format_error(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text("name,category,lat,lon\ngym1,gym,39.9,116.3\n")
        with pytest.raises(FormatError):
            parse_pois(str(path))

    def test_nonpositive_price_is_format_error(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text("name,price,lat,lon\nh1,-5.0,39.9,116.3\n")
        with pytest.raises(FormatError):
            parse_prices(str(path))

    def test_price_parse(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text("name,price,lat,lon\nh1,40000.5,39.9,116.3\n")
        records, malformed = parse_prices(str(path))
        assert records[0].price == 40000.5
        assert malformed == []


class TestSegmentWeeks:
    def test_single_week(self):
        start = week_start_of(1_600_000_000, TZ)
        stream = [rec("u", start + i * 3600) for i in range(24)]
        slices = segment_weeks(stream, TZ, min_records=10)
        assert len(slices) == 1
        assert slices[0].week_start == start

    def test_sunday_monday_boundary_splits(self):
        start = week_start_of(1_600_000_000, TZ)
        boundary = start + SECONDS_PER_WEEK
        stream = [rec("u", boundary - 60 - i) for i in range(12)][::-1] + [
            rec("u", boundary + 60 + i) for i in range(12)
        ]
        slices = segment_weeks(stream, TZ, min_records=1)
        assert len(slices) == 2
        assert slices[0].week_start == start
        assert slices[1].week_start == boundary

    def test_sparse_week_dropped(self):
        start = week_start_of(1_600_000_000, TZ)
        stream = [rec("u", start + i) for i in range(3)]
        assert segment_weeks(stream, TZ, min_records=10) == []

    def test_records_fall_inside_their_week(self):
        start = week_start_of(1_600_000_000, TZ)
        stream = [rec("u", start + i * 7000) for i in range(200)]
        for s in segment_weeks(stream, TZ, min_records=1):
            for r in s.records:
                assert s.week_start <= r.ts < s.week_start + SECONDS_PER_WEEK

    def test_no_record_lost_or_duplicated_above_threshold(self):
        start = week_start_of(1_600_000_000, TZ)
        stream = [rec("u", start + i * 3000) for i in range(600)]
        slices = segment_weeks(stream, TZ, min_records=1)
        ts = [r.ts for s in slices for r in s.records]
        assert ts == [r.ts for r in stream]


def test_week_start_is_monday_midnight_local():
    ts = 1_600_000_000
    start = week_start_of(ts, TZ)
    local = start + TZ
    assert local % 86400 == 0
    assert (local // 86400 + 3) % 7 == 0  # Monday
    assert start <= ts < start + SECONDS_PER_WEEK


class TestRoundTrip:
    def test_trajectories(self, tmp_path):
        records = [rec("u1", 10, 39.912345, 116.301), rec("u2", 20, 39.95, 116.39)]
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_trajectories(str(p1), records)
        parsed = parse_trajectories(str(p1))
        write_trajectories(str(p2), [r for u in sorted(parsed.streams) for r in parsed.streams[u]])
        assert p1.read_bytes() == p2.read_bytes()

    def test_pois_and_prices(self, tmp_path):
        from sesinfer.ingest import PoiRecord, PriceRecord

        pois = [PoiRecord("shop_a", "shopping", GeoPoint(39.9, 116.3))]
        prices = [PriceRecord("estate_b", 51234.25, GeoPoint(39.91, 116.31))]
        pp1, pp2 = tmp_path / "p1.csv", tmp_path / "p2.csv"
        write_pois(str(pp1), pois)
        write_pois(str(pp2), parse_pois(str(pp1))[0])
        assert pp1.read_bytes() == pp2.read_bytes()
        pr1, pr2 = tmp_path / "r1.csv", tmp_path / "r2.csv"
        write_prices(str(pr1), prices)
        write_prices(str(pr2), parse_prices(str(pr1))[0])
        assert pr1.read_bytes() == pr2.read_bytes()
