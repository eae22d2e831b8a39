"""
Stage functions shared by the command-line entry points and the demo.

Each stage takes parsed inputs plus a RunConfig and returns rows ready to
be written, so the same code path serves single commands and the full
end-to-end run. Row order is fixed by sorting, never by iteration order of
parallel work.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.spatial import cKDTree

from . import __version__
from .areal import (CLC_SCHEDULE, CLC_TABLE, GDLC_SCHEDULE, HARMONIZED_CLASSES, ReclassTable,
                    aggregate_crosswalk, expand_piecewise, raster_area_shares, raster_elevation_shares)
from .config import RunConfig
from .errors import TableFormatError, UnmappedUnitError, ValidationFailure
from .geomcore import AreaUnit, Crosswalk, GridFieldSnapshot, read_areas_geojson, read_crosswalk
from .gvf import GvfDomain, GvfModel, blend_weight, regularize
from .io import parse_float, read_table, require, sha256
from .kriging import krige_blocks
from .panel import Fragment, Panel, assemble, default_rules, missing_report, validate
from .survey import SIZES, SPECS, SurveyDomain, estimate_domains, reconstruct_strata
from .temporal import (ANNUAL, NONNEGATIVE_VARIABLES, SEASONS, STATS, TimedSeries, check_physical, convert_unit,
                       relative_humidity, summarize, wind_direction, wind_speed)
from .tuning import align_field

log = logging.getLogger(__name__)

WINDOW_ORDER = {ANNUAL: 0, **{s: i + 1 for i, s in enumerate(SEASONS)}}
STAT_ORDER = {s: i for i, s in enumerate(STATS)}

SUMMARY_HEADER = ["cell_id", "x", "y", "year", "season", "variable", "stat", "value"]
PREDICTION_HEADER = ["variable", "year", "sector", "area_id", "family", "nmax", "n_used",
                     "mean", "variance", "cv_rmse", "error"]
CV_HEADER = ["variable", "year", "sector", "stage", "candidate", "rmse", "chosen"]
FIDELITY_HEADER = ["variable", "year", "sector", "x", "y", "observed", "kriged"]
FRAGMENT_HEADER = ["area_id", "year", "variable", "value", "source"]
WEIGHT_HEADER = ["d", "s", "t", "y", "weight", "method", "donor_year"]
ESTIMATE_HEADER = ["d", "y", "variable", "total", "mean", "var_total", "var_mean",
                   "n_dy", "N_dy", "low_support"]
GVF_CANDIDATE_HEADER = ["variable", "response", "precision_spec", "status", "n_fit", "rmse_log",
                        "reduction_upper", "increase_share", "excluded_log", "excluded_ratio", "chosen"]
GVF_VARIANCE_HEADER = ["variable", "d", "y", "n", "var_direct", "var_gvf", "var_final", "w", "degenerate"]
MISSING_HEADER = ["source", "variable", "year", "covered", "missing"]
VIOLATION_HEADER = ["rule", "area_id", "year", "variable", "value", "message"]


def parse_years(text: str | Sequence[int] | None) -> list[int] | None:
    """``"2019-2023"``, ``"2019,2021"`` or a sequence of ints."""
    if text is None:
        return None
    if not isinstance(text, str):
        return sorted({int(y) for y in text})
    years: set[int] = set()
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            a, b = part.split("-", 1)
            if int(b) < int(a):
                raise ValueError(f"empty year range {part!r}")
            years.update(range(int(a), int(b) + 1))
        else:
            years.add(int(part))
    if not years:
        raise ValueError(f"no years in {text!r}")
    return sorted(years)


def load_areas(path) -> list[AreaUnit]:
    return read_areas_geojson(require(path))


def load_crosswalk(path) -> Crosswalk:
    return read_crosswalk(require(path))


# --------------------------------------------------------------------------
# temporal

def read_observations(path) -> dict[str, np.ndarray]:
    rows = read_table(path, ["cell_id", "x", "y", "timestamp", "variable", "value"])
    if not rows:
        return {k: np.array([]) for k in ("cell_id", "x", "y", "timestamp", "variable", "value")}
    try:
        return {
            "cell_id": np.array([r["cell_id"] for r in rows]),
            "x": np.array([float(r["x"]) for r in rows]),
            "y": np.array([float(r["y"]) for r in rows]),
            "timestamp": np.array([r["timestamp"] for r in rows], dtype="datetime64[s]"),
            "variable": np.array([r["variable"] for r in rows]),
            "value": np.array([parse_float(r["value"]) for r in rows]),
        }
    except ValueError as exc:
        raise TableFormatError(f"observations: {exc}") from exc


@dataclass
class TemporalOutput:
    rows: list
    issues: list = field(default_factory=list)   # (cell_id, year, season, variable, message)
    n_series: int = 0


def _split_series(obs: Mapping[str, np.ndarray]):
    cells = np.asarray(obs["cell_id"]).astype(str)
    variables = np.asarray(obs["variable"]).astype(str)
    times = np.asarray(obs["timestamp"], dtype="datetime64[s]")
    order = np.lexsort((times, variables, cells))
    cells, variables, times = cells[order], variables[order], times[order]
    values = np.asarray(obs["value"], dtype=float)[order]
    xs = np.asarray(obs["x"], dtype=float)[order]
    ys = np.asarray(obs["y"], dtype=float)[order]
    key_change = np.flatnonzero((cells[1:] != cells[:-1]) | (variables[1:] != variables[:-1])) + 1
    bounds = np.concatenate([[0], key_change, [len(cells)]])
    series: dict[str, dict[str, tuple]] = {}
    coords: dict[str, tuple[float, float]] = {}
    for a, b in zip(bounds[:-1], bounds[1:]):
        if a == b:
            continue
        cid, var = cells[a], variables[a]
        series.setdefault(cid, {})[var] = (times[a:b], values[a:b])
        if cid not in coords:
            coords[cid] = (float(xs[a]), float(ys[a]))
    return series, coords


def _paired(s1, s2):
    t, i1, i2 = np.intersect1d(s1[0], s2[0], assume_unique=True, return_indices=True)
    return t, s1[1][i1], s2[1][i2]


def derive_variables(per_var: dict, cfg: RunConfig, issues: list, cell_id: str) -> dict:
    """Add wind speed/direction and relative humidity where inputs allow."""
    out = dict(per_var)
    if "u10" in per_var and "v10" in per_var:
        t, u, v = _paired(per_var["u10"], per_var["v10"])
        out["ws"] = (t, wind_speed(u, v))
        out["wd"] = (t, np.asarray(wind_direction(u, v, cfg.wd_convention), dtype=float).reshape(-1))
    if "t2m" in per_var and "d2m" in per_var:
        t, tc, dc = _paired(per_var["t2m"], per_var["d2m"])
        a, b = cfg.magnus
        rh = np.full(len(t), np.nan)
        ok = np.isfinite(tc) & np.isfinite(dc) & (tc > -b) & (dc > -b) & (dc <= tc + 0.5)
        bad = np.isfinite(tc) & np.isfinite(dc) & ~ok
        if bad.any():
            issues.append((cell_id, None, None, "rh",
                           f"{int(bad.sum())} observations outside the humidity formula domain"))
        if ok.any():
            rh[ok] = relative_humidity(tc[ok], dc[ok], a, b)
        out["rh"] = (t, rh)
    return out


def aggregate_temporal(obs: Mapping[str, np.ndarray], cfg: RunConfig) -> TemporalOutput:
    """Unit conversion, derived variables and annual/seasonal summaries.

    Output rows follow ``SUMMARY_HEADER`` ordered by (cell, year, window,
    variable, stat). Windows without valid data are emitted with missing
    values and a count of zero.
    """
    series, coords = _split_series(obs)
    rows = []
    issues: list = []
    n_series = 0
    for cid in sorted(series):
        per_var = {}
        for var, (t, v) in series[cid].items():
            if len(t) > 1 and np.any(t[1:] == t[:-1]):
                raise TableFormatError(f"duplicate timestamps for {cid}/{var}")
            per_var[var] = (t, np.asarray(convert_unit(v, cfg.unit_rules.get(var, "identity")), dtype=float))
        per_var = derive_variables(per_var, cfg, issues, cid)
        x, y = coords[cid]
        cell_rows = []
        for var in sorted(per_var):
            t, v = per_var[var]
            ts = TimedSeries(var, cid, t, v)
            n_series += 1
            windows = list(summarize(ts, "annual").items())
            windows += list(summarize(ts, "seasonal", cfg.season_rule).items())
            for key, st in windows:
                year, season = (key, ANNUAL) if isinstance(key, int) else key
                for stat in STATS:
                    if st is None:
                        value = 0 if stat == "count" else math.nan
                    else:
                        value = st.get(stat)
                    cell_rows.append((cid, x, y, year, season, var, stat, value))
                    # sums are bounded below for fluxes but not above for humidity
                    if st is not None and (stat in ("mean", "min", "max")
                                           or (stat == "sum" and var in NONNEGATIVE_VARIABLES)):
                        msg = check_physical(var, value)
                        if msg:
                            issues.append((cid, year, season, var, msg))
        cell_rows.sort(key=lambda r: (r[3], WINDOW_ORDER[r[4]], r[5], STAT_ORDER[r[6]]))
        rows.extend(cell_rows)
    return TemporalOutput(rows, issues, n_series)


def field_name(variable: str, season: str, stat: str) -> str:
    if season == ANNUAL:
        return f"{variable}_{stat}"
    return f"{variable}_{season.lower()}_{stat}"


def fields_from_summary(rows: Iterable[Sequence], variables: Sequence[str] | None = None) -> list[GridFieldSnapshot]:
    """Kriging-ready snapshots, one per (field name, year), from summary rows."""
    wanted = None if variables is None else set(variables)
    acc: dict[tuple[str, int], list] = {}
    for cid, x, y, year, season, var, stat, value in rows:
        if stat == "count":
            continue
        name = field_name(var, season, stat)
        if wanted is not None and name not in wanted:
            continue
        value = float(value)
        if math.isnan(value):
            continue
        acc.setdefault((name, int(year)), []).append((float(x), float(y), value))
    out = []
    for (name, year), pts in sorted(acc.items()):
        arr = np.asarray(pts)
        out.append(GridFieldSnapshot(name, year, arr[:, :2], arr[:, 2]))
    return out


def read_fields(path, variables: Sequence[str] | None = None) -> list[GridFieldSnapshot]:
    """Fields from either a summary table or a plain (variable, year, x, y, value) table."""
    rows = read_table(path)
    if rows and "stat" in rows[0]:
        typed = [(r["cell_id"], float(r["x"]), float(r["y"]), int(r["year"]), r["season"],
                  r["variable"], r["stat"], parse_float(r["value"])) for r in rows]
        return fields_from_summary(typed, variables)
    missing = [c for c in ("variable", "year", "x", "y", "value") if rows and c not in rows[0]]
    if missing:
        raise TableFormatError(f"field table lacks columns {missing}")
    wanted = None if variables is None else set(variables)
    acc: dict = {}
    for r in rows:
        if wanted is not None and r["variable"] not in wanted:
            continue
        v = parse_float(r["value"])
        if math.isnan(v):
            continue
        sector = r.get("sector") or None
        if sector == "NA":
            sector = None
        acc.setdefault((r["variable"], int(r["year"]), sector or ""), []).append(
            (float(r["x"]), float(r["y"]), v))
    out = []
    for (name, year, sector), pts in sorted(acc.items()):
        arr = np.asarray(pts)
        out.append(GridFieldSnapshot(name, year, arr[:, :2], arr[:, 2], sector or None))
    return out


# --------------------------------------------------------------------------
# kriging

@dataclass
class KrigeOutput:
    predictions: list
    cv_rows: list
    fidelity: list
    chosen: dict


def source_cell_size(coords: np.ndarray) -> float:
    """Median nearest-neighbour spacing of the source locations."""
    coords = np.asarray(coords, dtype=float)
    if len(coords) < 2:
        return 1.0
    d, _ = cKDTree(coords).query(coords, k=2)
    return float(np.median(d[:, 1]))


def cell_blocks(centres: np.ndarray, size: float, per_side: int = 4) -> np.ndarray:
    """Square blocks of side ``size`` around each centre as ``(m, p, 2)``."""
    off = (np.arange(per_side) + 0.5) / per_side * size - size / 2
    ox, oy = np.meshgrid(off, off, indexing="ij")
    pattern = np.column_stack([ox.ravel(), oy.ravel()])
    return np.asarray(centres, dtype=float)[:, None, :] + pattern[None, :, :]


def _krige_one(fld: GridFieldSnapshot, areas, cfg: RunConfig):
    res = align_field(fld, areas, cfg.tuning_for())
    spec = res.final_spec
    dedup = fld.deduplicated()
    blocks = cell_blocks(dedup.coords, source_cell_size(dedup.coords))
    kriged, _, _ = krige_blocks(spec, dedup.coords, dedup.values, blocks, res.chosen_nmax)
    return res, dedup, kriged


def krige_fields(fields: Sequence[GridFieldSnapshot], areas: Sequence[AreaUnit], cfg: RunConfig) -> KrigeOutput:
    """Tune and block-krige every field; results are ordered by
    (variable, year, sector, area) whatever the worker count."""
    fields = sorted(fields, key=lambda f: (f.variable, f.year, f.sector or ""))
    if cfg.workers > 1 and len(fields) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as ex:
            results = list(ex.map(lambda f: _krige_one(f, areas, cfg), fields))
    else:
        results = [_krige_one(f, areas, cfg) for f in fields]
    preds, cv_rows, fidelity, chosen = [], [], [], {}
    for fld, (res, dedup, kriged) in zip(fields, results):
        sector = fld.sector
        for p in res.predictions:
            preds.append((fld.variable, fld.year, sector, p.area_id, p.family, p.nmax, p.n_used,
                          p.mean, p.variance, p.cv_rmse, p.error))
        for stage, cand, rmse in res.cv_table:
            win = res.chosen_family if stage == "family" else str(res.chosen_nmax)
            cv_rows.append((fld.variable, fld.year, sector, stage, cand, rmse, cand == win))
        for (x, y), obs, kv in zip(dedup.coords, dedup.values, kriged):
            fidelity.append((fld.variable, fld.year, sector, float(x), float(y), float(obs), float(kv)))
        label = fld.variable if sector is None else f"{fld.variable}/{sector}"
        chosen.setdefault(label, {})[str(fld.year)] = {
            "family": res.chosen_family, "nmax": res.chosen_nmax, "variogram": res.specs["final"],
            "n_samples": len(dedup), "n_failed_areas": sum(1 for p in res.predictions if p.error)}
    return KrigeOutput(preds, cv_rows, fidelity, chosen)


def prediction_fragment(preds: Iterable[Sequence]) -> list[tuple]:
    rows = []
    for r in preds:
        var, year, sector, area, mean = r[0], r[1], r[2], r[3], r[7]
        name = var if sector in (None, "", "NA") else f"{var}_{sector}"
        rows.append((area, int(year), name, mean, "kriging"))
    return rows


def read_predictions(path) -> list[tuple]:
    rows = read_table(path, PREDICTION_HEADER)
    return [(r["variable"], int(r["year"]), None if r["sector"] in ("", "NA") else r["sector"],
             r["area_id"], r["family"], int(r["nmax"]), int(r["n_used"]), parse_float(r["mean"]),
             parse_float(r["variance"]), parse_float(r["cv_rmse"]), r["error"]) for r in rows]


def fidelity_pairs(rows: Iterable[Sequence]) -> dict:
    acc: dict = {}
    for var, year, sector, _x, _y, obs, kv in rows:
        label = f"{var}/{int(year)}" if sector in (None, "", "NA") else f"{var}/{sector}/{int(year)}"
        o, k = acc.setdefault(label, ([], []))
        o.append(float(obs))
        k.append(float(kv))
    return {lab: (np.asarray(k), np.asarray(o)) for lab, (o, k) in acc.items()}


def read_fidelity(path) -> list[tuple]:
    rows = read_table(path, FIDELITY_HEADER)
    return [(r["variable"], int(r["year"]), r["sector"], float(r["x"]), float(r["y"]),
             float(r["observed"]), float(r["kriged"])) for r in rows]


# --------------------------------------------------------------------------
# areal

def _slug(label) -> str:
    return str(label).lower().replace("-", "_").replace(" ", "_")


def grid_step(values: np.ndarray) -> float:
    u = np.unique(np.asarray(values, dtype=float))
    d = np.diff(u)
    d = d[d > 1e-12]
    if len(d) == 0:
        raise TableFormatError("cannot infer raster spacing from a single row or column")
    return float(d.min())


def municipal_fragment(rows: Iterable[Mapping], xwalk: Crosswalk, mean_variables: Sequence[str] = (),
                       years: Sequence[int] | None = None) -> list[tuple]:
    """Area sums (or means for ``mean_variables``) of municipal records."""
    by_key: dict = {}
    for r in rows:
        y = int(r["year"])
        if years is not None and y not in years:
            continue
        by_key.setdefault((r["variable"], y), []).append((r["municipality_id"], parse_float(r["value"])))
    out = []
    for (var, y), recs in sorted(by_key.items()):
        method = "mean" if var in mean_variables else "sum"
        for area, v in aggregate_crosswalk(recs, xwalk, method).items():
            out.append((area, y, var, v, "municipal"))
    return out


def landcover_fragment(lc: Mapping[str, np.ndarray], areas: Sequence[AreaUnit], years: Sequence[int],
                       cell_area: float | None = None) -> list[tuple]:
    """Percent shares per harmonized class, expanded over years by snapshot schedule."""
    x = np.asarray(lc["x"], dtype=float)
    y = np.asarray(lc["y"], dtype=float)
    products = np.asarray(lc["product"]).astype(str)
    snaps = np.asarray(lc["snapshot"]).astype(int)
    classes = np.asarray(lc["class"]).astype(str)
    if cell_area is None:
        cell_area = grid_step(x) * grid_step(y)
    out = []
    schedules = {"clc": (CLC_SCHEDULE, True), "gdlc": (GDLC_SCHEDULE, False)}
    unknown = set(products) - set(schedules)
    if unknown:
        raise TableFormatError(f"unknown land-cover products {sorted(unknown)}")
    for product in sorted(set(products)):
        schedule, reclass = schedules[product]
        sel_p = products == product
        if reclass:
            table = ReclassTable({str(k): v for k, v in CLC_TABLE.entries.items()})
            order = list(HARMONIZED_CLASSES)
        else:
            table = None
            order = sorted(set(classes[sel_p]))
        shares_by_snap = {}
        for snap in sorted(set(snaps[sel_p])):
            sel = sel_p & (snaps == snap)
            shares_by_snap[snap] = raster_area_shares(np.column_stack([x[sel], y[sel]]), classes[sel],
                                                      areas, cell_area, table=table, class_order=order)
        for year in years:
            snap = expand_piecewise(schedule, year)
            shares = shares_by_snap.get(snap)
            if shares is None:
                log.warning("land-cover %s snapshot %d for %d not supplied", product, snap, year)
            for a in areas:
                for cls in order:
                    v = math.nan if shares is None else shares[a.id][cls]
                    out.append((a.id, year, f"lc_{product}_{_slug(cls)}", v, f"landcover_{product}"))
    return out


def elevation_fragment(dem: Mapping[str, np.ndarray], areas: Sequence[AreaUnit], years: Sequence[int]) -> list[tuple]:
    xy = np.column_stack([np.asarray(dem["x"], dtype=float), np.asarray(dem["y"], dtype=float)])
    shares = raster_elevation_shares(xy, np.asarray(dem["elevation"], dtype=float), areas)
    out = []
    for a in areas:
        for year in years:
            for band, v in zip(("plain", "hill", "mountain"), shares[a.id]):
                out.append((a.id, year, f"elev_share_{band}", v, "elevation"))
    return out


def read_columns(path, required: Sequence[str]) -> dict[str, np.ndarray]:
    rows = read_table(path, required)
    return {c: np.array([r[c] for r in rows]) for c in required}


# --------------------------------------------------------------------------
# survey

def survey_domains(census_rows: Iterable[Mapping], sample_rows: Sequence[Mapping], xwalk: Crosswalk,
                   years: Sequence[int] | None = None) -> tuple[list[SurveyDomain], list[str]]:
    """Reconstruct stratum populations and attach sampled farms to domains."""
    census: dict[tuple[str, int], np.ndarray] = {}
    unmapped = set()
    for r in census_rows:
        muni = r["municipality_id"]
        if muni not in xwalk:
            unmapped.add(muni)
            continue
        cy = int(r["year"])
        if cy not in (2010, 2020):
            raise TableFormatError(f"census year {cy} is not 2010 or 2020")
        tab = census.setdefault((xwalk[muni], cy), np.zeros((2, 3)))
        try:
            tab[SIZES.index(r["size"]), SPECS.index(r["spec"])] += float(r["N"])
        except ValueError as exc:
            raise TableFormatError(f"census row {dict(r)}: {exc}") from exc
    if unmapped:
        raise UnmappedUnitError(unmapped)
    base = {"farm_id", "d", "s", "t", "y"}
    variables = [c for c in (sample_rows[0].keys() if sample_rows else []) if c not in base]
    known_areas = set(xwalk.entries.values())
    farms: dict[tuple[str, int], list] = {}
    for r in sample_rows:
        if r["d"] not in known_areas:
            raise UnmappedUnitError({r["d"]})
        if r["s"] not in SIZES or r["t"] not in SPECS:
            raise TableFormatError(f"farm {r['farm_id']}: unknown stratum ({r['s']}, {r['t']})")
        vals = {v: parse_float(r[v]) for v in variables}
        farms.setdefault((r["d"], int(r["y"])), []).append((r["s"], r["t"], vals))
    if years is None:
        years = sorted({y for _, y in farms})
    domains = []
    for d in sorted(known_areas):
        c10 = census.get((d, 2010), np.zeros((2, 3)))
        c20 = census.get((d, 2020), np.zeros((2, 3)))
        for y in years:
            N = reconstruct_strata(c10, c20, y)
            domains.append(SurveyDomain(d, y, N, farms.get((d, y), [])))
    stray = set(farms) - {(dom.d, dom.y) for dom in domains}
    if stray:
        log.warning("%d sampled domains fall outside the requested years", len(stray))
    return domains, variables


@dataclass
class SurveyOutput:
    weights: list
    estimates: list
    fragment: list


def run_survey(domains: Sequence[SurveyDomain], variables: Sequence[str], cfg: RunConfig) -> SurveyOutput:
    weights, estimates = estimate_domains(domains, variables, cfg.tolerances.rake_tol,
                                          cfg.tolerances.rake_max_iter)
    wrows = sorted(((w.d, w.s, w.t, w.y, w.weight, w.method, w.donor_year) for w in weights),
                   key=lambda r: (r[0], r[3], SIZES.index(r[1]), SPECS.index(r[2])))
    erows = sorted(((e.d, e.y, e.variable, e.total, e.mean, e.var_total, e.var_mean, e.n_dy, e.N_dy,
                     e.low_support) for e in estimates), key=lambda r: (r[0], r[1], r[2]))
    frag = []
    for d, y, var, total, mean, *_ in erows:
        frag.append((d, y, f"fadn_{var}_total", total, "fadn"))
        frag.append((d, y, f"fadn_{var}_mean", mean, "fadn"))
    return SurveyOutput(wrows, erows, frag)


def read_estimates(path) -> list[tuple]:
    rows = read_table(path, ESTIMATE_HEADER)
    return [(r["d"], int(r["y"]), r["variable"], parse_float(r["total"]), parse_float(r["mean"]),
             parse_float(r["var_total"]), parse_float(r["var_mean"]), int(r["n_dy"]),
             parse_float(r["N_dy"]), r["low_support"] == "true") for r in rows]


# --------------------------------------------------------------------------
# variance functions

@dataclass
class GvfOutput:
    candidates: list
    variances: list
    models: dict
    fragment: list


def run_gvf(estimates: Sequence[Sequence], cfg: RunConfig) -> GvfOutput:
    """Smooth the direct variances of the domain totals, one variable at a time."""
    by_var: dict[str, list] = {}
    for row in estimates:
        by_var.setdefault(row[2], []).append(row)
    cand_rows, var_rows, models, frag = [], [], {}, []
    for var in sorted(by_var):
        rows = sorted(by_var[var], key=lambda r: (r[0], r[1]))
        domains = [GvfDomain(r[0], r[1], r[3], r[5], r[7], r[8]) for r in rows
                   if r[7] >= 1 and math.isfinite(r[3])]
        result = regularize(domains, cfg.tolerances.gvf_band)
        for c in result.candidates:
            if isinstance(c, GvfModel):
                m = c.fit_metrics
                cand_rows.append((var, c.response, c.precision_spec, "fitted", c.n_fit, m["rmse_log"],
                                  m["reduction_upper"], m["increase_share"], m["excluded_log"],
                                  m["excluded_ratio"], c is result.model))
            else:
                resp, spec, msg = c
                cand_rows.append((var, resp, spec, f"unavailable: {msg}", 0, math.nan, math.nan,
                                  math.nan, 0, 0, False))
        models[var] = None if result.model is None else result.model.describe()
        triples = {(d.area, d.year): (t, degen) for d, t, degen in result.triples}
        for r in rows:
            hit = triples.get((r[0], r[1]))
            if hit is None:
                var_rows.append((var, r[0], r[1], r[7], r[5], math.nan, math.nan, math.nan, False))
                frag.append((r[0], r[1], f"fadn_{var}_total_var", math.nan, "gvf"))
                continue
            t, degen = hit
            var_rows.append((var, r[0], r[1], t.n, t.var_direct, t.var_gvf, t.var_final,
                             blend_weight(t.n), degen))
            frag.append((r[0], r[1], f"fadn_{var}_total_var", t.var_final, "gvf"))
    return GvfOutput(cand_rows, var_rows, models, frag)


# --------------------------------------------------------------------------
# panel

def read_fragments(path, default_source: str | None = None) -> list[Fragment]:
    rows = read_table(path, ["area_id", "year", "variable", "value"])
    src_default = default_source or Path(path).stem
    by_src: dict[str, list] = {}
    for r in rows:
        src = r.get("source") or src_default
        by_src.setdefault(src, []).append((r["area_id"], int(r["year"]), r["variable"], parse_float(r["value"])))
    return [Fragment.of(s, rs) for s, rs in sorted(by_src.items())]


def fragments_from_rows(rows: Iterable[Sequence]) -> list[Fragment]:
    by_src: dict[str, list] = {}
    for a, y, var, v, src in rows:
        by_src.setdefault(src, []).append((a, y, var, v))
    return [Fragment.of(s, rs) for s, rs in sorted(by_src.items())]


def panel_long_rows(panel: Panel) -> list[tuple]:
    return [(a, y, v, x, s) for a, y, v, x, s in panel.long_rows()]


def read_panel(path) -> Panel:
    frags = read_fragments(path)
    return assemble(frags)


def run_validation(panel: Panel, cfg: RunConfig, fidelity: Mapping | None = None, strict: bool = False):
    rules = default_rules(cfg.tolerances.share_tol, fidelity, cfg.tolerances.fidelity_threshold)
    violations = validate(panel, rules)
    rows = [(v.rule, v.area_id, v.year, v.variable, v.value, v.message) for v in violations]
    return rows


def strict_check(rows: Sequence) -> None:
    if rows:
        raise ValidationFailure(f"{len(rows)} plausibility violations")


def missing_rows(panel: Panel) -> list[tuple]:
    return [(r["source"], r["variable"], r["year"], r["covered"], r["missing"]) for r in missing_report(panel)]


# --------------------------------------------------------------------------
# manifest

def file_entries(paths: Mapping[str, Path]) -> dict:
    """Basename and content hash per logical name; absolute paths are dropped."""
    return {name: {"file": Path(p).name, "sha256": sha256(p)} for name, p in sorted(paths.items())}


def build_manifest(command: str, cfg: RunConfig, inputs: Mapping[str, Path], outputs: Mapping[str, Path],
                   results: Mapping | None = None) -> dict:
    return {
        "command": command,
        "package": {"name": "harmonize", "version": __version__},
        "config": cfg.as_manifest(),
        "inputs": file_entries(inputs),
        "outputs": file_entries(outputs),
        "results": dict(results or {}),
    }
