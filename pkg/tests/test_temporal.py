import datetime as dt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from harmonize.errors import DomainError
from harmonize.temporal import (TimedSeries, assign_season, check_physical, convert_unit,
                                relative_humidity, summarize, wind_direction, wind_speed)

from oracles import magnus_rh, two_pass_stats


@pytest.mark.parametrize("value, rule, expected", [
    (273.15, "K_to_C", 0.0),
    (0.001, "m_to_mm", 1.0),
    (5.5, "identity", 5.5),
])
def test_convert_unit(value, rule, expected):
    assert convert_unit(value, rule) == pytest.approx(expected, abs=1e-12)


def test_convert_unit_unknown_rule():
    with pytest.raises(ValueError):
        convert_unit(1.0, "F_to_C")


@pytest.mark.parametrize("u, v, expected", [(3, 4, 5.0), (0, 0, 0.0), (-1, 0, 1.0)])
def test_wind_speed(u, v, expected):
    assert wind_speed(u, v) == expected


@pytest.mark.parametrize("u, v, expected", [(0, 1, 180.0), (0, -1, 0.0), (1, 0, 90.0)])
def test_wind_direction_default_convention(u, v, expected):
    assert wind_direction(u, v) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("u, v, expected", [(0, 1, 180.0), (0, -1, 0.0), (1, 0, 270.0), (-1, 0, 90.0)])
def test_wind_direction_meteorological(u, v, expected):
    assert wind_direction(u, v, "meteorological") == pytest.approx(expected, abs=1e-12)


def test_calm_wind_has_no_direction():
    assert np.isnan(wind_direction(0.0, 0.0))


@settings(max_examples=200, deadline=None)
@given(st.floats(-50, 50), st.floats(-50, 50))
def test_wind_symmetries(u, v):
    assert wind_speed(u, v) == wind_speed(-u, -v)
    if np.hypot(u, v) > 1e-6:
        a, b = wind_direction(u, v), wind_direction(-u, -v)
        assert 0 <= a < 360
        gap = abs((a - b) % 360.0 - 180.0)
        assert gap < 1e-9


def test_rh_saturation_and_reference_value():
    assert relative_humidity(15.0, 15.0) == 100.0
    assert relative_humidity(20.0, 10.0) == pytest.approx(magnus_rh(20.0, 10.0), rel=1e-12)
    assert relative_humidity(20.0, 10.0) == pytest.approx(52.541325581065884, rel=1e-12)


def test_rh_clamps_noisy_dewpoint():
    assert relative_humidity(10.0, 10.3) == 100.0


def test_rh_domain_errors():
    with pytest.raises(DomainError):
        relative_humidity(-250.0, -260.0)
    with pytest.raises(DomainError):
        relative_humidity(10.0, 12.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(-60, 50), st.floats(0, 60))
def test_rh_in_open_closed_interval(t, depression):
    rh = relative_humidity(t, t - depression)
    assert 0 < rh <= 100


@pytest.mark.parametrize("stamp, expected", [
    (dt.datetime(2015, 12, 15), ("Winter", 2015)),
    (dt.datetime(2016, 2, 10), ("Winter", 2016)),
    (dt.datetime(2019, 7, 1), ("Summer", 2019)),
    (dt.datetime(2019, 4, 30), ("Spring", 2019)),
    (dt.datetime(2019, 11, 30), ("Fall", 2019)),
])
def test_assign_season(stamp, expected):
    assert assign_season(stamp) == expected


def test_assign_season_next_year_rule():
    assert assign_season(dt.datetime(2015, 12, 15), "december-next-year") == ("Winter", 2016)
    assert assign_season(dt.datetime(2016, 1, 15), "december-next-year") == ("Winter", 2016)


def monthly(values, year=2019):
    times = [np.datetime64(f"{year}-{m:02d}-15T00:00:00") for m in range(1, len(values) + 1)]
    return TimedSeries("x", "C1", np.array(times), np.array(values, dtype=float))


def test_constant_series_stats():
    s = summarize(monthly([5.0] * 12))[2019]
    assert (s.mean, s.min, s.max, s.sd, s.count) == (5.0, 5.0, 5.0, 0.0, 12)


def test_monthly_one_to_twelve():
    s = summarize(monthly(list(range(1, 13))))[2019]
    assert s.mean == 6.5 and s.sum == 78.0


def test_single_observation_is_flagged():
    s = summarize(monthly([4.0]))[2019]
    assert s.sd == 0.0 and s.single_observation


def test_all_missing_window_is_none():
    out = summarize(monthly([np.nan] * 3))
    assert out == {2019: None}


def test_seasonal_keys_and_values():
    out = summarize(monthly(list(range(1, 13))), window="seasonal")
    assert out[(2019, "Winter")].mean == pytest.approx((1 + 2 + 12) / 3)
    assert out[(2019, "Summer")].count == 3
    nxt = summarize(monthly(list(range(1, 13))), window="seasonal", season_rule="december-next-year")
    assert nxt[(2020, "Winter")].count == 1
    assert nxt[(2019, "Winter")].count == 2


def test_series_validation():
    with pytest.raises(ValueError):
        TimedSeries("x", "c", np.array(["2020-01-02", "2020-01-01"], dtype="datetime64[s]"), np.zeros(2))
    with pytest.raises(ValueError):
        TimedSeries("x", "c", np.array(["2020-01-01"], dtype="datetime64[s]"), np.array([np.inf]))


def random_series(seed, n=400, missing=0.1):
    r = np.random.default_rng(seed)
    start = np.datetime64("2018-01-01T00:00:00")
    offsets = np.sort(r.choice(3 * 365 * 24, size=n, replace=False)).astype("timedelta64[h]")
    x = r.normal(10, 5, size=n)
    x[r.random(n) < missing] = np.nan
    return TimedSeries("x", "c", start + offsets, x)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_summaries_match_two_pass_oracle(seed):
    s = random_series(seed)
    years = s.times.astype("datetime64[Y]").astype(int) + 1970
    for y, stats in summarize(s).items():
        xs = [v for v, yy in zip(s.values, years) if yy == y and not np.isnan(v)]
        ref = two_pass_stats(xs)
        assert stats.count == ref["count"]
        for key in ("mean", "min", "max", "sd", "sum"):
            assert stats.get(key) == pytest.approx(ref[key], rel=1e-12, abs=1e-12)
        assert stats.min <= stats.mean <= stats.max


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_seasonal_means_recombine_to_annual(seed):
    s = random_series(seed)
    annual = summarize(s)
    seasonal = summarize(s, window="seasonal")
    for y, a in annual.items():
        parts = [seasonal[(y, name)] for name in ("Winter", "Spring", "Summer", "Fall")
                 if seasonal.get((y, name)) is not None]
        total = sum(p.count for p in parts)
        assert total == a.count
        assert sum(p.mean * p.count for p in parts) / total == pytest.approx(a.mean, abs=1e-9)


@pytest.mark.parametrize("variable, value, bad", [
    ("tp_sum", -0.1, True), ("tp_sum", 0.0, False), ("rh_mean", 101.0, True),
    ("rh_mean", 0.0, True), ("rh_max", 100.0, False), ("t2m_mean", -40.0, False),
])
def test_check_physical(variable, value, bad):
    assert (check_physical(variable, value) is not None) == bad
