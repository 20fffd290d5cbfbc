import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from croplink.calibration import MeasurementSample
from croplink.errors import InsufficientSamplesError, MalformedLogError
from croplink.propagation import LinkGeometry, predict_rsrp
from croplink.telemetry import (
    FlightLogRecord,
    GridSpec,
    format_flight_log,
    grid_interpolate,
    interpolate_points,
    parse_flight_log,
    planar_distance,
    project,
    samples_to_flight_log,
    synth_generate,
    to_samples,
    unproject,
)

HEADER = "timestamp,lat,lon,alt_m,rsrp_dbm\n"
BS = (40.1, -88.2)


class TestParse:
    def test_well_formed(self):
        text = HEADER + "0.0,40.1,-88.2,5,-80\n0.5,40.1001,-88.2,5.5,-81.5\n1.0,40.1002,-88.2,6,-83\n"
        result = parse_flight_log(text)
        assert len(result.records) == 3
        assert result.rejections == [] and result.flagged == []
        assert result.records[1] == FlightLogRecord(0.5, 40.1001, -88.2, 5.5, -81.5)

    def test_missing_rsrp_rejected(self):
        text = HEADER + "0,40.1,-88.2,5,-80\n0.5,40.1,-88.2,5,\n1,40.1,-88.2,5,-82\n"
        result = parse_flight_log(text)
        assert len(result.records) == 2
        assert result.rejections == [(3, "missing rsrp")]

    @pytest.mark.parametrize(
        "row, reason",
        [
            ("0,abc,-88.2,5,-80", "non-numeric lat"),
            ("0,40.1,-88.2,nan,-80", "non-finite altitude"),
            ("0,91,-88.2,5,-80", "lat out of range"),
            ("0,40.1,-88.2,-3,-80", "altitude out of range"),
            ("0,40.1,-88.2,5", "wrong field count"),
        ],
    )
    def test_rejection_reasons(self, row, reason):
        assert parse_flight_log(HEADER + row + "\n").rejections == [(2, reason)]

    def test_one_minute_capture(self):
        rows = "".join(f"{i / 2},40.1,-88.2,{1 + i * 0.1:.1f},-85\n" for i in range(120))
        result = parse_flight_log(HEADER + rows)
        assert len(result.records) == 120
        assert result.records[-1].timestamp == 59.5

    def test_malformed_header(self):
        with pytest.raises(MalformedLogError, match="line 1"):
            parse_flight_log("time,lat,lon,alt,rsrp\n0,1,2,3,4\n")

    def test_header_case_insensitive(self):
        assert len(parse_flight_log(HEADER.upper() + "0,40.1,-88.2,5,-80\n").records) == 1

    def test_empty(self):
        with pytest.raises(MalformedLogError):
            parse_flight_log("")

    def test_outliers_flagged_not_dropped(self):
        result = parse_flight_log(HEADER + "0,40.1,-88.2,5,-80\n0.5,40.1,-88.2,5,-155\n")
        assert len(result.records) == 2
        assert result.flagged == [3]

    def test_sources(self, tmp_path):
        text = HEADER + "0,40.1,-88.2,5,-80\n"
        path = tmp_path / "log.csv"
        path.write_text(text)
        for src in (text.encode(), path, io.BytesIO(text.encode()), io.StringIO(text)):
            assert len(parse_flight_log(src).records) == 1


class TestRoundTrip:
    @settings(max_examples=50)
    @given(
        st.lists(
            st.builds(
                FlightLogRecord,
                st.floats(0, 1e5),
                st.floats(-90, 90),
                st.floats(-180, 180),
                st.floats(0, 500),
                st.floats(-140, -40),
            ),
            min_size=1,
            max_size=20,
        )
    )
    def test_identical_records(self, records):
        assert parse_flight_log(format_flight_log(records)).records == records


class TestProjection:
    def test_base_station_at_origin(self):
        rec = FlightLogRecord(0, *BS, 12.5, -80)
        (s,) = to_samples([rec], *BS, h_c=1.0)
        assert s.geometry.d == 0.0
        assert s.geometry.h_bs == 12.5
        assert s.geometry.h_c == 1.0

    def test_meridian_offset(self):
        # 0.001 degree of latitude on a 6371008.8 m sphere
        assert planar_distance(40.0, -88.0, 40.001, -88.0) == pytest.approx(111.19508023353292, rel=1e-9)

    def test_antenna_height_shifts_geometry(self):
        rec = FlightLogRecord(0, 40.1005, -88.2, 12.5, -80)
        (s,) = to_samples([rec], *BS, h_c=1.5, antenna_height=0.5)
        assert s.geometry.h_bs == 12.0 and s.geometry.h_c == 1.0

    @given(st.floats(-60, 60), st.floats(-179, 179), st.floats(-0.02, 0.02), st.floats(-0.02, 0.02))
    def test_symmetry(self, lat, lon, dlat, dlon):
        a = planar_distance(lat, lon, lat + dlat, lon + dlon)
        b = planar_distance(lat + dlat, lon + dlon, lat, lon)
        assert a == b
        assert planar_distance(lat, lon, lat, lon) == 0.0

    def test_project_unproject(self):
        lat, lon = unproject(1234.5, -987.6, *BS)
        x, y = project(lat, lon, *BS)
        assert (float(x), float(y)) == pytest.approx((1234.5, -987.6), abs=1e-8)

    def test_invalid_base_station(self):
        with pytest.raises(ValueError):
            to_samples([], 95.0, 0.0, h_c=0.0)


def _sample(x, y, v):
    return MeasurementSample(LinkGeometry(1.0, 1.0), v, position=(x, y))


class TestGridInterpolate:
    SPEC = GridSpec(0.0, 0.0, 10, 10, 1.0)

    def test_reproduces_sample_at_center(self):
        samples = [_sample(0, 0, -90), _sample(10, 0, -80), _sample(0, 10, -100), _sample(5.5, 5.5, -70)]
        grid = grid_interpolate(samples, self.SPEC)
        assert grid.values[5, 5] == pytest.approx(-70.0, abs=1e-12)

    def test_plane_is_reproduced(self):
        # a linear field is reproduced exactly by any triangulation
        rng = np.random.default_rng(0)
        pts = np.vstack([[[0, 0], [10, 0], [0, 10], [10, 10]], rng.uniform(0, 10, (20, 2))])
        vals = -90 + 0.5 * pts[:, 0] - 0.25 * pts[:, 1]
        grid = interpolate_points(pts, vals, self.SPEC)
        xs, ys = self.SPEC.centers()
        want = -90 + 0.5 * xs[:, None] - 0.25 * ys[None, :]
        assert grid.valid.all()
        np.testing.assert_allclose(grid.values, want, atol=1e-9)

    def test_edge_midpoint(self):
        spec = GridSpec(0.0, -0.5, 2, 1, 1.0)  # centers (0.5, 0) and (1.5, 0)
        grid = interpolate_points([(0, 0), (2, 0), (1, 1)], [-100.0, -80.0, -90.0], spec)
        assert grid.values[0, 0] == pytest.approx(-95.0, abs=1e-12)
        assert grid.values[1, 0] == pytest.approx(-85.0, abs=1e-12)

    def test_outside_hull_masked(self):
        grid = interpolate_points([(0, 0), (3, 0), (0, 3)], [-80.0, -90.0, -100.0], self.SPEC)
        assert not grid.valid[9, 9]
        assert np.isnan(grid.values[9, 9])
        assert grid.valid[0, 0]
        assert ",,0" in grid.to_csv()

    def test_bounded_by_samples(self):
        rng = np.random.default_rng(3)
        pts = rng.uniform(0, 10, (40, 2))
        vals = rng.uniform(-120, -60, 40)
        grid = interpolate_points(pts, vals, self.SPEC)
        v = grid.values[grid.valid]
        assert v.min() >= vals.min() - 1e-9 and v.max() <= vals.max() + 1e-9

    def test_duplicates_averaged(self):
        pts = [(0, 0), (0, 0), (10, 0), (0, 10)]
        grid = interpolate_points(pts, [-80.0, -90.0, -85.0, -85.0], GridSpec(-0.5, -0.5, 1, 1, 1.0))
        assert grid.values[0, 0] == pytest.approx(-85.0)

    def test_too_few_points(self):
        with pytest.raises(InsufficientSamplesError):
            interpolate_points([(0, 0), (1, 1)], [-80.0, -81.0], self.SPEC)

    def test_collinear(self):
        with pytest.raises(InsufficientSamplesError):
            interpolate_points([(0, 0), (1, 1), (2, 2), (3, 3)], [-80.0] * 4, self.SPEC)

    def test_csv_layout(self):
        grid = interpolate_points([(0, 0), (10, 0), (0, 10), (10, 10)], [-80.0] * 4, GridSpec(0, 0, 2, 3, 2.0))
        lines = grid.to_csv().splitlines()
        assert lines[0] == "x_m,y_m,rsrp_dbm,valid"
        assert lines[1:3] == ["1,1,-80,1", "3,1,-80,1"]
        assert len(lines) == 7


class TestSynth:
    def test_noiseless_matches_model(self, table1):
        for s in synth_generate(table1, 200, 0.0, seed=7):
            assert s.rsrp == predict_rsrp(table1, s.geometry).rsrp

    def test_deterministic(self, table1):
        assert synth_generate(table1, 100, 3.0, seed=42) == synth_generate(table1, 100, 3.0, seed=42)
        assert synth_generate(table1, 100, 3.0, seed=42) != synth_generate(table1, 100, 3.0, seed=43)

    def test_noise_level(self, table1):
        data = synth_generate(table1, 10000, 3.0, seed=1)
        res = np.array([s.rsrp - predict_rsrp(table1, s.geometry).rsrp for s in data])
        assert 2.9 <= res.std() <= 3.1

    def test_ranges_respected(self, table1):
        data = synth_generate(table1, 500, 0.0, seed=2, d_range=(5, 6), h_bs_range=7.0, h_c=(0.5, 1.0))
        assert all(5 <= s.geometry.d <= 6 and s.geometry.h_bs == 7.0 for s in data)
        assert all(0.5 <= s.geometry.h_c <= 1.0 for s in data)

    def test_timestamps_at_two_hertz(self, table1):
        data = synth_generate(table1, 4, seed=0)
        assert [s.timestamp for s in data] == [0.0, 0.5, 1.0, 1.5]

    def test_flight_log_round_trip_geometry(self, table1):
        data = synth_generate(table1, 50, 0.0, seed=5, h_c=1.0)
        records = samples_to_flight_log(data, *BS)
        back = to_samples(parse_flight_log(format_flight_log(records)).records, *BS, h_c=1.0)
        for a, b in zip(data, back):
            assert b.geometry.d == pytest.approx(a.geometry.d, abs=1e-6)
            assert b.geometry.h_bs == a.geometry.h_bs
            assert b.rsrp == a.rsrp

    @pytest.mark.parametrize("kwargs", [{"n": 0}, {"n": 5, "noise_sigma": -1}])
    def test_invalid(self, table1, kwargs):
        with pytest.raises(ValueError):
            synth_generate(table1, **kwargs)
