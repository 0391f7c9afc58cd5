import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from wsis.errors import ConfigError, IngestionError
from wsis.winddata import (ScenarioSpec, WindSeries, default_scenarios, interpolate_to_minutes,
                           load_csv, synthesize, write_csv)

SEQ = (8.74, 7.32, 4.50, 10.39, 6.66)


def series(points, res=10):
    m, s = zip(*points)
    return WindSeries(np.array(m), np.array(s, dtype=float), np.zeros(len(m)), res)


class TestInterpolate:
    def test_midpoint(self):
        out = interpolate_to_minutes(series([(0, 6.0), (10, 7.0)]))
        assert out.resolution == 1 and len(out) == 11
        assert out.speeds[5] == 6.5

    def test_constant(self):
        out = interpolate_to_minutes(series([(0, 6.0), (10, 6.0)]))
        assert np.all(out.speeds == 6.0)

    def test_linear(self):
        out = interpolate_to_minutes(series([(0, 4.0), (10, 10.0)]))
        assert out.speeds[3] == pytest.approx(5.8, abs=1e-12)

    def test_too_short(self):
        with pytest.raises(IngestionError):
            interpolate_to_minutes(series([(0, 4.0)]))

    def test_direction_short_arc(self):
        d = np.radians([170.0, -170.0])
        s = WindSeries(np.array([0, 10]), np.array([5.0, 5.0]), d, 10)
        out = interpolate_to_minutes(s)
        # halfway across the +-180 seam rather than through zero
        assert abs(abs(out.directions[5]) - math.pi) < 1e-12

    @given(st.lists(st.floats(0.0, 30.0), min_size=2, max_size=20), st.integers(2, 15))
    def test_original_points_preserved(self, speeds, res):
        m = np.arange(len(speeds)) * res
        s = WindSeries(m, np.array(speeds), np.zeros(len(speeds)), res)
        out = interpolate_to_minutes(s)
        assert np.array_equal(out.speeds[m], s.speeds)
        assert np.all(np.diff(out.minutes) == 1)

    @given(st.lists(st.floats(0.0, 30.0), min_size=2, max_size=30))
    def test_idempotent_on_minute_series(self, speeds):
        s = WindSeries(np.arange(len(speeds)), np.array(speeds), np.zeros(len(speeds)), 1)
        once = interpolate_to_minutes(s)
        assert once.equals(s)
        assert interpolate_to_minutes(once).equals(once)


class TestSynthesize:
    def test_fixed_sequence(self):
        s = synthesize(ScenarioSpec("fixed", 5, "fixed-sequence", sequence=SEQ))
        assert tuple(s.speeds.tolist()) == SEQ
        assert len(s) == 5

    def test_deterministic(self):
        spec = default_scenarios()[0]
        assert synthesize(spec).equals(synthesize(spec))

    def test_seed_override_changes_series(self):
        spec = default_scenarios()[0]
        assert not synthesize(spec).equals(synthesize(spec, seed=7))

    def test_zero_volatility(self):
        s = synthesize(ScenarioSpec("flat", 100, "synthetic-high", 3, mean=15.0, volatility=0.0))
        assert np.all(s.speeds == 15.0)

    def test_unknown_generator(self):
        with pytest.raises(ConfigError):
            ScenarioSpec("x", 10, "gaussian")

    @given(st.integers(0, 2**31 - 1), st.floats(0.0, 30.0), st.floats(0.0, 5.0))
    def test_clipped_range(self, seed, mean, vol):
        s = synthesize(ScenarioSpec("r", 200, "synthetic-moderate", seed, mean, vol))
        assert np.all((s.speeds >= 0.0) & (s.speeds <= 30.0))

    def test_default_scenarios(self):
        specs = default_scenarios()
        assert [s.name for s in specs] == ["low", "moderate-a", "moderate-b", "high"]
        assert all(s.duration == 1440 for s in specs)
        means = [synthesize(s).speeds.mean() for s in specs]
        assert means[0] < means[1] < means[3]

    def test_file_generator(self, tmp_path):
        p = tmp_path / "w.csv"
        p.write_text("0,6.0\n10,7.0\n20,5.0\n")
        s = synthesize(ScenarioSpec("f", 15, "file", path=str(p)))
        assert len(s) == 15 and s.speeds[5] == 6.5


class TestCsv:
    def test_headerless(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("0,6.0\n10,7.0")
        s = load_csv(p)
        assert len(s) == 2 and s.resolution == 10
        assert np.all(s.directions == 0.0)

    def test_bad_row_names_line(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("abc,6.0\n")
        with pytest.raises(IngestionError, match="row 1"):
            load_csv(p)

    def test_degrees(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("0,6.0,90\n")
        assert load_csv(p).directions[0] == pytest.approx(math.pi / 2, abs=1e-15)

    def test_non_monotonic(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("minute,speed_mps\n0,6.0\n10,7.0\n5,7.0\n")
        with pytest.raises(IngestionError, match="row 4"):
            load_csv(p)

    def test_negative_speed(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("0,-1.0\n")
        with pytest.raises(IngestionError):
            load_csv(p)

    @given(st.lists(st.tuples(st.floats(0.0, 30.0), st.floats(-math.pi, math.pi)),
                    min_size=1, max_size=30))
    def test_round_trip(self, tmp_path_factory, rows):
        p = tmp_path_factory.mktemp("rt") / "w.csv"
        s = WindSeries(np.arange(len(rows)), np.array([r[0] for r in rows]),
                       np.array([r[1] for r in rows]), 1)
        write_csv(s, p)
        first = load_csv(p)
        write_csv(first, p)
        again = load_csv(p)
        assert again.equals(first)
        assert np.array_equal(first.speeds, s.speeds)
        # not every radian value has an exact decimal-degree spelling
        assert np.allclose(first.directions, s.directions, rtol=0, atol=1e-15)

    def test_header_line(self, tmp_path):
        s = synthesize(default_scenarios(30)[1])
        p = tmp_path / "w.csv"
        write_csv(s, p)
        assert p.read_text().splitlines()[0] == "minute,speed_mps,direction_deg"
