"""
Acceptance criteria, each checked at its stated tolerance.

Every test records one ``PASS``/``FAIL`` line that is printed in the
terminal summary (and to stdout when run with ``-s``).
"""

import math
import time

import numpy as np
import pytest

from harmonize.areal import (CLC_SCHEDULE, GDLC_SCHEDULE, HARMONIZED_CLASSES, elevation_band_shares,
                             expand_piecewise, raster_area_shares, raster_elevation_shares)
from harmonize.cli import main
from harmonize.geomcore import AreaUnit, GridFieldSnapshot, discretize_block
from harmonize.gvf import GvfModel, blend, select_model
from harmonize.kriging import krige_block_points, predict_block
from harmonize.survey import design_variance, rake_2d
from harmonize.temporal import TimedSeries, relative_humidity, summarize, wind_direction, wind_speed
from harmonize.tuning import TuningConfig, align_field
from harmonize.variogram import VariogramSpec

from conftest import grid_coords
from oracles import dense_block_kriging, exponential_cov, ipf_by_root, monte_carlo_stratified_total


@pytest.fixture
def record(request):
    lines = request.config.acceptance_lines

    def _record(label, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} {label}: {detail}"
        lines.append(line)
        print(line)
        assert ok, line

    return _record


# --------------------------------------------------------------------------

def test_c1_block_kriging_matches_dense_solve(record, grid6, four_blocks, exp_spec):
    cov = lambda h: float(exponential_cov(h, 0.0, 1.0, 2.0))  # noqa: E731
    worst_mean = worst_var = 0.0
    elapsed = 0.0
    for area in four_blocks:
        bp = discretize_block(area, 0.5)
        t0 = time.perf_counter()
        pred = predict_block(grid6, area, exp_spec, nmax=36, block_points=bp)
        elapsed += time.perf_counter() - t0
        mean, var, _ = dense_block_kriging(cov, grid6.coords, grid6.values, bp)
        worst_mean = max(worst_mean, abs(pred.mean - mean) / abs(mean))
        worst_var = max(worst_var, abs(pred.variance - var) / abs(var))
        assert pred.n_used == 36
    ok = worst_mean <= 1e-8 and worst_var <= 1e-8 and elapsed < 1.0
    record("C1 block kriging vs dense solve", ok,
           f"max rel err mean={worst_mean:.2e} var={worst_var:.2e} (tol 1e-8), {elapsed:.3f}s (< 1s)")


FAMILIES = [("exponential", None), ("spherical", None), ("gaussian", None), ("matern", 1.5), ("matern", 2.5)]


def random_instance(r):
    family, smoothness = FAMILIES[r.integers(len(FAMILIES))]
    spec = VariogramSpec(family, nugget=float(r.uniform(0, 0.5)), psill=float(r.uniform(0.1, 2.0)),
                         range=float(r.uniform(0.5, 5.0)), smoothness=smoothness)
    n = int(r.integers(3, 26))
    coords = r.uniform(0, 10, size=(n, 2))
    values = r.normal(size=n)
    x0, y0 = r.uniform(0, 9, size=2)
    w, h = r.uniform(0.2, 1.0, size=2)
    block = discretize_block(AreaUnit.rectangle("T", x0, y0, x0 + w, y0 + h), min(w, h) / 3)
    return spec, coords, values, block


def test_c2_exactness_suite(record):
    r = np.random.default_rng(2)
    worst_sum = 0.0
    for _ in range(1000):
        spec, coords, values, block = random_instance(r)
        _, _, _, system = krige_block_points(spec, coords, values, block, nmax=int(r.integers(3, 30)))
        worst_sum = max(worst_sum, abs(float(np.sum(system.weights)) - 1.0))

    worst_interp = 0.0
    for _ in range(200):
        spec, coords, values, _ = random_instance(r)
        spec = VariogramSpec(spec.family, 0.0, spec.psill, spec.range, smoothness=spec.smoothness)
        i = int(r.integers(len(values)))
        mean, _, _, _ = krige_block_points(spec, coords, values, [coords[i]], nmax=len(values))
        worst_interp = max(worst_interp, abs(mean - values[i]))

    constant_exact = True
    for _ in range(200):
        spec, coords, _, block = random_instance(r)
        c = float(r.uniform(-1e3, 1e3))
        mean, _, _, _ = krige_block_points(spec, coords, np.full(len(coords), c), block, nmax=12)
        constant_exact &= mean == c

    ok = worst_sum <= 1e-10 and worst_interp <= 1e-9 and constant_exact
    record("C2 exactness suite", ok,
           f"max |sum w - 1|={worst_sum:.1e} (1e-10), max interp err={worst_interp:.1e} (1e-9), "
           f"constant blocks exact={constant_exact}")


def smooth_field(x, y):
    return np.sin(x / 3.0) + np.cos(y / 4.0) + 0.3 * np.sin((x + y) / 5.0)


def test_c3_desk_scale_fidelity(record):
    centres = grid_coords(20)
    field = GridFieldSnapshot("f", 2020, centres, smooth_field(centres[:, 0], centres[:, 1]))
    cells = [AreaUnit.rectangle(f"c{i}", x - 0.5, y - 0.5, x + 0.5, y + 0.5) for i, (x, y) in enumerate(centres)]
    sub = (np.arange(10) + 0.5) / 10 - 0.5
    sx, sy = np.meshgrid(sub, sub)
    truth = np.array([smooth_field(x + sx, y + sy).mean() for x, y in centres])
    t0 = time.perf_counter()
    res = align_field(field, cells, TuningConfig(seed=7))
    elapsed = time.perf_counter() - t0
    by_id = {p.area_id: p.mean for p in res.predictions}
    kriged = np.array([by_id[a.id] for a in cells])
    r = float(np.corrcoef(kriged, truth)[0, 1])
    ok = r >= 0.95 and elapsed < 30.0
    record("C3 desk-scale fidelity", ok, f"Pearson r={r:.6f} (>= 0.95), {elapsed:.2f}s (< 30s), "
                                         f"family={res.chosen_family} nmax={res.chosen_nmax}")


def test_c4_raking(record):
    r = np.random.default_rng(4)
    worst_margin = worst_oracle = 0.0
    for _ in range(200):
        n = r.integers(1, 10, size=(2, 3)).astype(float)
        N = n * r.uniform(1.0, 20.0, size=(2, 3))
        rows, cols = N.sum(axis=1), N.sum(axis=0)
        w = rake_2d(n, rows, cols)
        x = w * n
        worst_margin = max(worst_margin, np.max(np.abs(x.sum(axis=1) - rows)), np.max(np.abs(x.sum(axis=0) - cols)))
        worst_oracle = max(worst_oracle, float(np.max(np.abs(w - ipf_by_root(n, rows, cols)))))
    w1 = rake_2d([[1, 1, 0], [1, 1, 0]], [10, 10], [12, 8, 0])
    analytic = w1[:, :2].tolist() == [[6.0, 4.0], [6.0, 4.0]] and bool(np.isnan(w1[:, 2]).all())
    ok = worst_margin <= 1e-8 and worst_oracle <= 1e-8 and analytic
    record("C4 raking", ok, f"max margin err={worst_margin:.1e} (1e-8), max |w - oracle|={worst_oracle:.1e} "
                            f"(1e-8), rank-1 instance exact={analytic}")


def test_c5_design_variance_vs_monte_carlo(record):
    r = np.random.default_rng(5)
    populations = [r.gamma(2.0, 10.0, size=40), r.normal(100.0, 25.0, size=60)]
    sizes = [6, 15]
    # the formula evaluated through the package with a sample whose variance
    # equals the population variance
    strata = []
    for pop, n in zip(populations, sizes):
        z = np.arange(n, dtype=float)
        z = (z - z.mean()) / z.std(ddof=1)
        strata.append((float(len(pop)), list(pop.mean() + np.std(pop, ddof=1) * z)))
    formula, _, _ = design_variance(strata)
    reps = 100_000
    est = monte_carlo_stratified_total(populations, sizes, reps, np.random.default_rng(55))
    dev2 = (est - est.mean()) ** 2
    mc_var = float(dev2.sum() / (reps - 1))
    se = float(dev2.std(ddof=1) / math.sqrt(reps))
    z_score = abs(mc_var - formula) / se
    census = design_variance([(5.0, [1.0, 4.0, 2.0, 8.0, 3.0])])[0]
    ok = z_score <= 3.0 and census == 0.0
    record("C5 design variance vs Monte Carlo", ok,
           f"formula={formula:.2f} MC={mc_var:.2f} |diff|={z_score:.2f} SE (<= 3), n=N contributes {census}")


def _candidate(label, rmse, red, inc):
    m = GvfModel("variance", "log_n", {"intercept": 0.0, "estimate_slope": 0.0, "precision_slope": 0.0}, {}, {})
    m.fit_metrics.update(rmse_log=rmse, reduction_upper=red, increase_share=inc, label=label)
    return m


def test_c6_gvf_blending_and_selection(record):
    table = [blend(0.0, 7.0, 1) == 7.0, blend(4.0, 2.0, 2) == 3.0, blend(4.0, 100.0, 3) == 4.0,
             blend(4.0, 100.0, 50) == 4.0]
    # best RMSE 1.00 gives the band 1.05; c2 is out of band, then reduction
    # keeps c1 c3 c4 c5, increase share keeps c3 c4 c5, RMSE keeps c3 c5,
    # candidate order picks c3
    fixture = [("c0", 1.00, 0.90, 0.10), ("c1", 1.04, 0.80, 0.30), ("c2", 1.06, 0.10, 0.00),
               ("c3", 1.02, 0.80, 0.20), ("c4", 1.03, 0.80, 0.20), ("c5", 1.02, 0.80, 0.20)]
    chosen = select_model([_candidate(*c) for c in fixture], band_tolerance=0.05).fit_metrics["label"]
    ok = all(table) and chosen == "c3"
    record("C6 GVF blending and selection", ok, f"blend table {sum(table)}/4 exact, selected {chosen} (expect c3)")


def test_c7_temporal_invariants(record):
    r = np.random.default_rng(7)
    worst = 0.0
    cell_years = 0
    for cell in range(50):
        start = np.datetime64("2020-01-01T00:00:00")
        offsets = np.sort(r.choice(2 * 365 * 24, size=300, replace=False)).astype("timedelta64[h]")
        values = r.normal(10, 5, size=300)
        values[r.random(300) < 0.1] = np.nan
        s = TimedSeries("x", f"c{cell}", start + offsets, values)
        annual = summarize(s)
        seasonal = summarize(s, window="seasonal")
        for y, a in annual.items():
            parts = [seasonal[(y, k)] for k in ("Winter", "Spring", "Summer", "Fall") if seasonal.get((y, k))]
            total = sum(p.count for p in parts)
            worst = max(worst, abs(sum(p.mean * p.count for p in parts) / total - a.mean))
            cell_years += 1
    wind = (wind_speed(3, 4) == 5.0
            and abs(wind_direction(0, 1) - 180.0) < 1e-12
            and abs(wind_direction(0, -1) - 0.0) < 1e-12
            and abs(wind_direction(1, 0) - 90.0) < 1e-12)
    t = r.uniform(-60, 50, size=5000)
    rh = [relative_humidity(ti, ti - d) for ti, d in zip(t, r.uniform(0, 60, size=5000))]
    rh_ok = all(0 < v <= 100 for v in rh) and relative_humidity(20.0, 20.0) == 100.0
    ok = cell_years == 100 and worst <= 1e-9 and wind and rh_ok
    record("C7 temporal invariants", ok, f"{cell_years} cell-years max seasonal/annual gap={worst:.1e} (1e-9), "
                                         f"wind cases={wind}, RH in (0,100]={rh_ok}")


def test_c8_areal_accounting(record):
    r = np.random.default_rng(8)
    # grid-aligned tiles covering the raster exactly, one of them L-shaped
    tiles = [AreaUnit.rectangle(f"T{i}{j}", 4 * i, 4 * j, 4 * i + 4, 4 * j + 4) for i in range(3) for j in range(3)
             if (i, j) != (2, 2)]
    tiles.append(AreaUnit.polygon("L", [(12, 0), (16, 0), (16, 12), (8, 12), (8, 8), (12, 8)]))
    c = (np.arange(64) + 0.5) * 0.25
    gx, gy = np.meshgrid(c, c[:48])
    xy = np.column_stack([gx.ravel(), gy.ravel()])
    classes = r.choice(list(HARMONIZED_CLASSES), size=len(xy))
    elev = r.uniform(-50, 2500, size=len(xy))
    lc = raster_area_shares(xy, classes, tiles, cell_area=0.0625, class_order=HARMONIZED_CLASSES)
    el = raster_elevation_shares(xy, elev, tiles)
    gaps = [abs(math.fsum(v.values()) - 100.0) for v in lc.values()]
    gaps += [abs(math.fsum(v) - 100.0) for v in el.values()]
    gaps += [abs(math.fsum(elevation_band_shares(r.uniform(0, 3000, size=int(k)))) - 100.0)
             for k in r.integers(1, 500, size=50)]
    mapping = (expand_piecewise(CLC_SCHEDULE, 2014), expand_piecewise(CLC_SCHEDULE, 2018),
               expand_piecewise(GDLC_SCHEDULE, 2022))
    ok = max(gaps) <= 1e-9 and mapping == (2012, 2018, 2019)
    record("C8 areal accounting", ok, f"max |sum shares - 100|={max(gaps):.1e} (1e-9) over {len(gaps)} sets, "
                                      f"schedule 2014/2018/2022 -> {mapping}")


@pytest.mark.slow
def test_c9_determinism_and_runtime(record, tmp_path, monkeypatch):
    monkeypatch.delenv("HARMONIZE_OUTPUT_DIR", raising=False)
    runs, times = [], []
    for k in range(2):
        out = tmp_path / f"run{k}"
        t0 = time.perf_counter()
        code = main(["demo", "--seed", "2024", "--out", str(out)])
        times.append(time.perf_counter() - t0)
        assert code == 0
        runs.append({name: (out / name).read_bytes() for name in
                     ("panel/panel_wide.csv", "panel/panel_long.csv", "manifest.json")})
    identical = runs[0] == runs[1]
    ok = identical and max(times) < 60.0
    record("C9 determinism and runtime", ok,
           f"byte-identical panels and manifest={identical}, runtimes {times[0]:.1f}s/{times[1]:.1f}s (< 60s)")
