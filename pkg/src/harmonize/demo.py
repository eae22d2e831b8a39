"""
End-to-end run on synthetic inputs: generate, write, read back, and push
through every stage into a validated panel.
"""

from __future__ import annotations

import dataclasses
import logging
import time
from pathlib import Path

from . import pipeline as pl
from .config import RunConfig
from .io import read_table, write_json, write_table
from .panel import assemble
from .synthetic import DEMO_KRIGE_VARIABLES, demo_dataset, write_demo_inputs

log = logging.getLogger(__name__)

MEAN_VARIABLES = ("income_pc",)


def run_demo(cfg: RunConfig, out: str | Path, strict: bool = False) -> dict:
    """Run the full pipeline under ``out`` and return the manifest.

    Only relative file names and content hashes enter the manifest, so two
    runs with the same seed produce identical bytes wherever they run.
    """
    out = Path(out)
    if cfg.krige_variables is None:
        cfg = dataclasses.replace(cfg, krige_variables=DEMO_KRIGE_VARIABLES)
    timings = {}

    def tick(name, t0):
        timings[name] = time.perf_counter() - t0
        log.info("demo stage %s: %.2f s", name, timings[name])

    t0 = time.perf_counter()
    data = demo_dataset(cfg.seed)
    inputs = write_demo_inputs(data, out / "inputs")
    years = list(data.years)
    tick("generate", t0)

    t0 = time.perf_counter()
    areas = pl.load_areas(inputs["areas"])
    xwalk = pl.load_crosswalk(inputs["crosswalk"])
    temporal = pl.aggregate_temporal(pl.read_observations(inputs["observations"]), cfg)
    outputs = {
        "summary": write_table(out / "temporal" / "summary.csv", pl.SUMMARY_HEADER, temporal.rows),
        "temporal_issues": write_table(out / "temporal" / "temporal_issues.csv",
                                       ["cell_id", "year", "season", "variable", "message"], temporal.issues),
    }
    tick("temporal", t0)

    t0 = time.perf_counter()
    fields = pl.fields_from_summary(temporal.rows, cfg.krige_variables)
    kr = pl.krige_fields(fields, areas, cfg)
    kfrag = pl.prediction_fragment(kr.predictions)
    outputs.update({
        "predictions": write_table(out / "krige" / "predictions.csv", pl.PREDICTION_HEADER, kr.predictions),
        "cv_table": write_table(out / "krige" / "cv_table.csv", pl.CV_HEADER, kr.cv_rows),
        "fidelity": write_table(out / "krige" / "fidelity.csv", pl.FIDELITY_HEADER, kr.fidelity),
    })
    tick("krige", t0)

    t0 = time.perf_counter()
    lc = pl.read_columns(inputs["landcover"], ["x", "y", "product", "snapshot", "class"])
    dem = pl.read_columns(inputs["dem"], ["x", "y", "elevation"])
    municipal = read_table(inputs["municipal"], ["municipality_id", "year", "variable", "value"])
    afrag = (pl.municipal_fragment(municipal, xwalk, MEAN_VARIABLES, years)
             + pl.landcover_fragment(lc, areas, years)
             + pl.elevation_fragment(dem, areas, years))
    outputs["areal_fragment"] = write_table(out / "areal" / "areal_fragment.csv", pl.FRAGMENT_HEADER, afrag)
    tick("areal", t0)

    t0 = time.perf_counter()
    census = read_table(inputs["census"], ["municipality_id", "size", "spec", "year", "N"])
    sample = read_table(inputs["sample"], ["farm_id", "d", "s", "t", "y"])
    domains, variables = pl.survey_domains(census, sample, xwalk, years)
    sv = pl.run_survey(domains, variables, cfg)
    outputs.update({
        "weights": write_table(out / "survey" / "weights.csv", pl.WEIGHT_HEADER, sv.weights),
        "estimates": write_table(out / "survey" / "estimates.csv", pl.ESTIMATE_HEADER, sv.estimates),
    })
    gv = pl.run_gvf(sv.estimates, cfg)
    outputs.update({
        "gvf_candidates": write_table(out / "gvf" / "gvf_candidates.csv", pl.GVF_CANDIDATE_HEADER, gv.candidates),
        "gvf_variances": write_table(out / "gvf" / "gvf_variances.csv", pl.GVF_VARIANCE_HEADER, gv.variances),
        "gvf_models": write_json(out / "gvf" / "gvf_models.json", gv.models),
    })
    tick("survey", t0)

    t0 = time.perf_counter()
    frags = pl.fragments_from_rows(kfrag + afrag + sv.fragment + gv.fragment)
    panel = assemble(frags, [a.id for a in areas], years)
    header, wide = panel.wide_rows()
    outputs.update({
        "panel_wide": write_table(out / "panel" / "panel_wide.csv", header, wide),
        "panel_long": write_table(out / "panel" / "panel_long.csv", pl.FRAGMENT_HEADER, pl.panel_long_rows(panel)),
        "missing_report": write_table(out / "panel" / "missing_report.csv", pl.MISSING_HEADER,
                                      pl.missing_rows(panel)),
    })
    violations = pl.run_validation(panel, cfg, pl.fidelity_pairs(kr.fidelity))
    outputs["violations"] = write_table(out / "panel" / "violations.csv", pl.VIOLATION_HEADER, violations)
    tick("panel", t0)

    methods: dict[str, int] = {}
    for w in sv.weights:
        methods[w[5]] = methods.get(w[5], 0) + 1
    results = {
        "kriging": kr.chosen,
        "temporal": {"series": temporal.n_series, "issues": len(temporal.issues)},
        "survey": {"domains": len(domains), "variables": variables, "weight_methods": dict(sorted(methods.items()))},
        "gvf": {"chosen": {v: (None if m is None else f"{m['response']}:{m['precision_spec']}")
                           for v, m in gv.models.items()},
                "quantile_method": "linear", "band_tolerance": cfg.tolerances.gvf_band},
        "panel": {"areas": len(panel.areas), "years": panel.years,
                  "columns": [f"{s}:{v}" for s, v in panel.columns]},
        "validate": {"violations": len(violations), "strict": strict},
        "demo": {"seed_streams": ["demo-meteo", "demo-landcover", "demo-municipal", "demo-survey", "cv-folds"],
                 "mean_variables": list(MEAN_VARIABLES)},
    }
    manifest = pl.build_manifest("demo", cfg, inputs, outputs, results)
    write_json(out / "manifest.json", manifest)
    log.info("demo timings: %s", {k: round(v, 2) for k, v in timings.items()})
    if strict:
        pl.strict_check(violations)
    return manifest
