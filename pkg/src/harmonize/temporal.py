"""
Unit conversions, derived near-surface meteorology and annual / seasonal
summaries of high-frequency series.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import DomainError

KELVIN_OFFSET = 273.15
MAGNUS_A = 17.625
MAGNUS_B = 243.04  # degC
DEWPOINT_SLACK = 0.5

SEASONS = ("Winter", "Spring", "Summer", "Fall")
ANNUAL = "ANNUAL"
_MONTH_SEASON = {12: "Winter", 1: "Winter", 2: "Winter",
                 3: "Spring", 4: "Spring", 5: "Spring",
                 6: "Summer", 7: "Summer", 8: "Summer",
                 9: "Fall", 10: "Fall", 11: "Fall"}
# indexed by month % 12, so December sits at slot 0
_SEASON_INDEX = np.array([0, 0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3])

STATS = ("mean", "min", "max", "sd", "sum", "count")

NONNEGATIVE_VARIABLES = ("tp", "sf", "ro", "sro", "ssro")


def convert_unit(value, rule: str = "identity"):
    if rule == "K_to_C":
        return value - KELVIN_OFFSET
    if rule == "m_to_mm":
        return value * 1000.0
    if rule == "identity":
        return value
    raise ValueError(f"unknown unit rule {rule!r}")


def wind_speed(u, v):
    return np.hypot(u, v)


def wind_direction(u, v, convention: str = "ccw-from-south"):
    """Direction in degrees, wrapped into [0, 360).

    ``"ccw-from-south"`` (default) evaluates ``180 - atan2(u/ws, v/ws) * 180/pi``;
    ``"meteorological"`` uses ``180 + atan2(u, v) * 180/pi``. A calm
    (zero) wind vector gives NaN.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    ws = np.hypot(u, v)
    with np.errstate(invalid="ignore", divide="ignore"):
        ang = np.degrees(np.arctan2(u / ws, v / ws))
    if convention == "ccw-from-south":
        wd = 180.0 - ang
    elif convention == "meteorological":
        wd = 180.0 + ang
    else:
        raise ValueError(f"unknown wind-direction convention {convention!r}")
    wd = np.mod(wd, 360.0)
    wd = np.where(wd >= 360.0, 0.0, wd)
    wd = np.where(ws > 0, wd, np.nan)
    return float(wd) if wd.ndim == 0 else wd


def relative_humidity(t2m, d2m, a: float = MAGNUS_A, b: float = MAGNUS_B):
    """Magnus-formula relative humidity (%) from temperature and dew point in degC."""
    t = np.asarray(t2m, dtype=float)
    d = np.asarray(d2m, dtype=float)
    if np.any(t <= -b) or np.any(d <= -b):
        raise DomainError(f"temperatures must exceed {-b} degC")
    if np.any(d > t + DEWPOINT_SLACK):
        raise DomainError("dew point exceeds air temperature beyond tolerance")
    rh = 100.0 * np.exp(a * d / (b + d) - a * t / (b + t))
    rh = np.minimum(rh, 100.0)
    return float(rh) if rh.ndim == 0 else rh


SEASON_RULES = ("december-own-year", "december-next-year")


def assign_season(timestamp, rule: str = "december-own-year") -> tuple[str, int]:
    """Season and season-year.

    Under the default rule December stays in its own calendar year, so each
    calendar year splits exactly into four seasons. ``"december-next-year"``
    gives the meteorological DJF grouping instead.
    """
    if rule not in SEASON_RULES:
        raise ValueError(f"unknown season rule {rule!r}")
    year = timestamp.year
    if rule == "december-next-year" and timestamp.month == 12:
        year += 1
    return _MONTH_SEASON[timestamp.month], year


@dataclass(frozen=True)
class TimedSeries:
    variable: str
    cell_id: str
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype="datetime64[s]")
        v = np.asarray(self.values, dtype=float)
        if t.shape != v.shape:
            raise ValueError("times and values differ in length")
        if len(t) > 1 and not np.all(t[1:] > t[:-1]):
            raise ValueError("timestamps must be strictly increasing")
        if np.any(np.isinf(v)):
            raise ValueError("values must be finite or NaN (missing)")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_observations(cls, variable, cell_id, observations: Iterable):
        obs = list(observations)
        times = np.array([np.datetime64(t, "s") for t, _ in obs], dtype="datetime64[s]")
        values = np.array([np.nan if v is None else v for _, v in obs], dtype=float)
        return cls(variable, cell_id, times, values)


@dataclass(frozen=True)
class SummaryStats:
    mean: float
    min: float
    max: float
    sd: float
    sum: float
    count: int
    single_observation: bool = False

    def get(self, name: str) -> float:
        return getattr(self, name)


def _calendar(times: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    years = times.astype("datetime64[Y]").astype(int) + 1970
    months = times.astype("datetime64[M]").astype(int) % 12 + 1
    return years, months


def _stats(x: np.ndarray) -> SummaryStats:
    n = len(x)
    mean = float(np.mean(x))
    sd = float(np.std(x, ddof=1)) if n > 1 else 0.0
    lo, hi = float(np.min(x)), float(np.max(x))
    # floating summation can push the mean a hair outside [min, max]
    mean = min(max(mean, lo), hi)
    return SummaryStats(mean, lo, hi, sd, float(np.sum(x)), n, single_observation=n == 1)


def summarize(series: TimedSeries, window: str = "annual",
              season_rule: str = "december-own-year") -> dict:
    """Per-window statistics over non-missing observations.

    Keys are ``year`` for ``window="annual"`` and ``(year, season)`` for
    ``"seasonal"``. Windows present in the series but without any valid
    observation map to ``None``.
    """
    if window not in ("annual", "seasonal"):
        raise ValueError("window must be 'annual' or 'seasonal'")
    if season_rule not in SEASON_RULES:
        raise ValueError(f"unknown season rule {season_rule!r}")
    if len(series.values) == 0:
        return {}
    years, months = _calendar(series.times)
    valid = ~np.isnan(series.values)
    if window == "seasonal":
        seas = _SEASON_INDEX[months % 12]
        if season_rule == "december-next-year":
            years = years + (months == 12)
    else:
        seas = np.zeros_like(years)
    codes = years * 4 + seas
    uniq, inverse = np.unique(codes, return_inverse=True)
    out = {}
    for g, code in enumerate(uniq):
        sel = (inverse == g) & valid
        x = series.values[sel]
        year, s = int(code // 4), int(code % 4)
        key = year if window == "annual" else (year, SEASONS[s])
        out[key] = _stats(x) if len(x) else None
    return out


def check_physical(variable: str, value: float) -> str | None:
    """Return a message when a summary value breaks a physical bound."""
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return None
    base = variable.split("_")[0]
    if base in NONNEGATIVE_VARIABLES and value < 0:
        return f"{variable} negative ({value})"
    if base == "rh" and not (0 < value <= 100):
        return f"{variable} outside (0, 100] ({value})"
    return None
