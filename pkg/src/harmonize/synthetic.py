"""
Synthetic desk-scale inputs for the end-to-end demo.

Everything is drawn from named sub-streams of one seed, so adding a new
input family never changes the draws of an existing one.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .areal import CLC_RECLASS, HARMONIZED_CLASSES
from .geomcore import AreaUnit, Crosswalk, areas_to_geojson
from .io import write_json, write_table
from .survey import SIZES, SPECS

DEMO_YEARS = (2019, 2020, 2021, 2022, 2023)
DEMO_KRIGE_VARIABLES = ("t2m_mean", "t2m_summer_mean", "t2m_winter_mean",
                        "tp_sum", "rh_mean", "pm10_mean")
EXTENT = 16.0


def substream(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(name.encode())]))


@dataclass
class DemoData:
    areas: list
    crosswalk: Crosswalk
    years: tuple
    observations: dict = field(default_factory=dict)   # columns of the long table
    landcover: dict = field(default_factory=dict)
    dem: dict = field(default_factory=dict)
    municipal: list = field(default_factory=list)      # (municipality, year, variable, value)
    census: list = field(default_factory=list)         # (municipality, size, spec, year, N)
    sample: list = field(default_factory=list)         # (farm_id, d, s, t, y, output, costs)


def demo_areas(n_side: int = 16) -> list[AreaUnit]:
    step = EXTENT / n_side
    areas = []
    for j in range(n_side):
        for i in range(n_side):
            k = j * n_side + i + 1
            areas.append(AreaUnit.rectangle(f"ASR{k:03d}", i * step, j * step,
                                            (i + 1) * step, (j + 1) * step))
    return areas


def demo_crosswalk(areas, per_area: int = 3) -> Crosswalk:
    pairs = []
    for k, a in enumerate(areas):
        for m in range(per_area):
            pairs.append((f"M{k * per_area + m + 1:04d}", a.id))
    return Crosswalk.from_pairs(pairs)


def cell_centres(n: int, extent: float = EXTENT) -> np.ndarray:
    step = extent / n
    c = (np.arange(n) + 0.5) * step
    gx, gy = np.meshgrid(c, c, indexing="xy")
    return np.column_stack([gx.ravel(), gy.ravel()])


def _smooth(xy, rng, n_waves: int = 4, scale: float = 6.0):
    """Sum of random plane waves: a cheap smooth random surface."""
    out = np.zeros(len(xy))
    for _ in range(n_waves):
        k = rng.normal(0, 1.0 / scale, size=2)
        out += np.cos(xy @ k + rng.uniform(0, 2 * np.pi))
    return out / np.sqrt(n_waves)


def _weekly_times(years) -> np.ndarray:
    start = np.datetime64(f"{years[0]}-01-01T12:00:00", "s")
    stop = np.datetime64(f"{years[-1] + 1}-01-01T00:00:00", "s")
    return np.arange(start, stop, np.timedelta64(7, "D"))


def _observations(seed, years, n_grid=20, n_pm=16):
    rng = substream(seed, "demo-meteo")
    xy = cell_centres(n_grid)
    times = _weekly_times(years)
    doy = (times - times.astype("datetime64[Y]")).astype("timedelta64[D]").astype(int)
    yr = times.astype("datetime64[Y]").astype(int) + 1970
    phase = np.sin(2 * np.pi * (doy - 105) / 365.25)                # summer peak
    nt, nc = len(times), len(xy)

    base_t = 287.0 + 3.0 * _smooth(xy, rng) - 0.15 * xy[:, 1]
    amp = 9.0 + 1.5 * _smooth(xy, rng)
    year_shift = {y: rng.normal(0, 0.4) + 0.5 * _smooth(xy, rng, scale=8.0) for y in years}
    t2m = base_t[None, :] + amp[None, :] * phase[:, None]
    t2m += np.stack([year_shift[y] for y in yr]) + rng.normal(0, 1.0, size=(nt, nc))
    spread = 4.0 + 1.5 * (_smooth(xy, rng) + 1.5) + np.abs(rng.normal(0, 1.0, size=(nt, nc)))
    d2m = t2m - spread
    wet = np.exp(0.9 * _smooth(xy, rng, scale=5.0))
    tp = 0.004 * wet[None, :] * rng.gamma(4.0, 0.25, size=(nt, nc)) * (rng.random((nt, nc)) < 0.8)
    u10 = 2.0 * _smooth(xy, rng) + rng.normal(0, 1.5, size=(nt, nc))
    v10 = 1.0 + 1.5 * _smooth(xy, rng) + rng.normal(0, 1.5, size=(nt, nc))
    # a few missing observations exercise the missing-value path
    t2m[rng.random((nt, nc)) < 0.002] = np.nan

    pm_xy = cell_centres(n_pm)
    pm_base = 22.0 + 6.0 * _smooth(pm_xy, rng, scale=5.0)
    pm10 = pm_base[None, :] * np.exp(rng.normal(0, 0.25, size=(nt, len(pm_xy)))) \
        * (1.0 + 0.3 * np.cos(2 * np.pi * doy / 365.25))[:, None]

    blocks = []
    for var, arr, cxy, prefix in (("t2m", t2m, xy, "C"), ("d2m", d2m, xy, "C"), ("tp", tp, xy, "C"),
                                  ("u10", u10, xy, "C"), ("v10", v10, xy, "C"),
                                  ("pm10", pm10, pm_xy, "P")):
        ids = np.array([f"{prefix}{i:04d}" for i in range(len(cxy))])
        blocks.append({
            "cell_id": np.repeat(ids, nt),
            "x": np.repeat(cxy[:, 0], nt),
            "y": np.repeat(cxy[:, 1], nt),
            "timestamp": np.tile(times, len(cxy)),
            "variable": np.full(nt * len(cxy), var),
            "value": arr.T.ravel(),
        })
    return {k: np.concatenate([b[k] for b in blocks]) for k in blocks[0]}


def _landcover(seed, years, spacing=0.25):
    rng = substream(seed, "demo-landcover")
    n = int(round(EXTENT / spacing))
    xy = cell_centres(n)
    codes = np.array(sorted(CLC_RECLASS))
    gdlc = np.array(HARMONIZED_CLASSES)
    rows = {"x": [], "y": [], "product": [], "snapshot": [], "class": []}
    field0 = _smooth(xy, rng, scale=3.0)
    for product, snaps in (("clc", (2012, 2018)), ("gdlc", (2015, 2016, 2017, 2018, 2019))):
        for snap in snaps:
            score = field0 + 0.3 * _smooth(xy, rng, scale=3.0) + rng.normal(0, 0.15, size=len(xy))
            ranks = np.clip(((score + 2.5) / 5.0 * len(codes)).astype(int), 0, len(codes) - 1)
            if product == "clc":
                cls = codes[ranks].astype(str)
            else:
                cls = gdlc[ranks * len(gdlc) // len(codes)]
            rows["x"].append(xy[:, 0])
            rows["y"].append(xy[:, 1])
            rows["product"].append(np.full(len(xy), product))
            rows["snapshot"].append(np.full(len(xy), snap))
            rows["class"].append(cls)
    lc = {k: np.concatenate(v) for k, v in rows.items()}
    elev = 450.0 + 380.0 * _smooth(xy, rng, scale=4.0) + 60.0 * rng.normal(size=len(xy))
    dem = {"x": xy[:, 0], "y": xy[:, 1], "elevation": np.round(elev, 1)}
    return lc, dem


def _municipal(seed, xwalk: Crosswalk, years):
    rng = substream(seed, "demo-municipal")
    rows = []
    for muni in sorted(xwalk.entries):
        herd = rng.gamma(2.0, 400.0)
        income = rng.normal(18_000, 2_500)
        for y in years:
            rows.append((muni, y, "livestock_units", round(herd * rng.uniform(0.9, 1.1), 1)))
            # the socio-economic source starts one year later than the others
            if y > years[0]:
                rows.append((muni, y, "income_pc", round(income * (1 + 0.01 * (y - years[0])), 2)))
    return rows


def _survey(seed, areas, xwalk: Crosswalk, years):
    rng = substream(seed, "demo-survey")
    members = xwalk.members()
    census = []
    area_N = {}
    for a in areas:
        tot10 = np.zeros((2, 3))
        for muni in members[a.id]:
            base = rng.gamma(3.0, 8.0, size=(2, 3)) * np.array([[1.6], [0.5]])
            c10 = np.round(base)
            c20 = np.round(base * rng.uniform(0.75, 1.0, size=(2, 3)))
            for cy, tab in ((2010, c10), (2020, c20)):
                for i, s in enumerate(SIZES):
                    for j, t in enumerate(SPECS):
                        census.append((muni, s, t, cy, int(tab[i, j])))
            tot10 += c10
        area_N[a.id] = tot10
    sample = []
    fid = 0
    scale = {"small": 40_000.0, "large": 250_000.0}
    for a in areas:
        rate = rng.uniform(0.005, 0.06)
        level = rng.lognormal(0, 0.3)
        for y in years:
            for i, s in enumerate(SIZES):
                for j, t in enumerate(SPECS):
                    n = rng.binomial(int(area_N[a.id][i, j] * 0.7), rate)
                    for _ in range(n):
                        fid += 1
                        out = scale[s] * level * rng.lognormal(0, 0.5) * (1 + 0.2 * j)
                        sample.append((f"F{fid:06d}", a.id, s, t, y, round(out, 2),
                                       round(out * rng.uniform(0.5, 0.9), 2)))
    return census, sample


def demo_dataset(seed: int, years=DEMO_YEARS) -> DemoData:
    areas = demo_areas()
    xwalk = demo_crosswalk(areas)
    data = DemoData(areas, xwalk, tuple(years))
    data.observations = _observations(seed, years)
    data.landcover, data.dem = _landcover(seed, years)
    data.municipal = _municipal(seed, xwalk, years)
    data.census, data.sample = _survey(seed, areas, xwalk, years)
    return data


def _format_times(times: np.ndarray) -> np.ndarray:
    return np.datetime_as_string(times, unit="s")


def write_demo_inputs(data: DemoData, folder: str | Path) -> dict[str, Path]:
    """Write every demo input as a delimited table (areas as GeoJSON)."""
    folder = Path(folder)
    folder.mkdir(parents=True, exist_ok=True)
    paths = {}
    paths["areas"] = write_json(folder / "areas.geojson", areas_to_geojson(data.areas))
    paths["crosswalk"] = write_table(folder / "crosswalk.csv", ["municipality_id", "area_id"],
                                     sorted(data.crosswalk.entries.items()))
    obs = data.observations
    paths["observations"] = write_table(
        folder / "observations.csv", ["cell_id", "x", "y", "timestamp", "variable", "value"],
        zip(obs["cell_id"].tolist(), obs["x"].tolist(), obs["y"].tolist(),
            _format_times(obs["timestamp"]).tolist(), obs["variable"].tolist(), obs["value"].tolist()))
    lc = data.landcover
    paths["landcover"] = write_table(folder / "landcover.csv", ["x", "y", "product", "snapshot", "class"],
                                     zip(lc["x"].tolist(), lc["y"].tolist(), lc["product"].tolist(),
                                         lc["snapshot"].tolist(), lc["class"].tolist()))
    paths["dem"] = write_table(folder / "dem.csv", ["x", "y", "elevation"],
                               zip(data.dem["x"].tolist(), data.dem["y"].tolist(),
                                   data.dem["elevation"].tolist()))
    paths["municipal"] = write_table(folder / "municipal.csv",
                                     ["municipality_id", "year", "variable", "value"], data.municipal)
    paths["census"] = write_table(folder / "census.csv",
                                  ["municipality_id", "size", "spec", "year", "N"], data.census)
    paths["sample"] = write_table(folder / "sample.csv",
                                  ["farm_id", "d", "s", "t", "y", "output", "costs"], data.sample)
    return paths
