"""
Command-line entry point.

Exit codes: 0 success, 1 processing error, 2 unknown command or bad flags,
3 malformed configuration, 4 missing input file, 5 plausibility
violations under ``--strict``. Logs go to standard error; data only to
files under the output directory (``--out``, the ``paths.output`` config
entry, or the ``HARMONIZE_OUTPUT_DIR`` environment variable, which wins).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import Sequence

from . import pipeline as pl
from .config import RunConfig, load_config
from .errors import ConfigError, HarmonizeError, MissingInputError, ValidationFailure
from .io import read_table, write_json, write_table
from .panel import assemble

log = logging.getLogger("harmonize")

COMMANDS = ("krige", "aggregate-temporal", "aggregate-areal", "survey-weights", "survey-estimate",
            "gvf", "panel-build", "validate", "demo")

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_CONFIG, EXIT_MISSING, EXIT_STRICT = 0, 1, 2, 3, 4, 5


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        _diagnostic("UsageError", message)
        raise SystemExit(EXIT_USAGE)


def _diagnostic(kind: str, message: str) -> None:
    sys.stderr.write(json.dumps({"error": kind, "message": message}, sort_keys=True) + "\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--out", help="output directory (overrides paths.output)")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--workers", type=int, help="parallel kriging tasks")
    common.add_argument("--log-level", default="WARNING")

    p = _Parser(prog="harmonize", description="Harmonize gridded, municipal and survey data "
                                              "into an area-by-year panel.")
    sub = p.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    k = sub.add_parser("krige", parents=[common], help="tune and block-krige fields to areas")
    k.add_argument("--field", required=True, help="field table or temporal summary table")
    k.add_argument("--areas", required=True, help="areas GeoJSON")
    k.add_argument("--variables", nargs="+", help="field names to krige (default: all or config)")

    t = sub.add_parser("aggregate-temporal", parents=[common], help="annual and seasonal summaries")
    t.add_argument("--observations", required=True, help="long table cell_id,x,y,timestamp,variable,value")

    a = sub.add_parser("aggregate-areal", parents=[common], help="municipal, land-cover and elevation fragments")
    a.add_argument("--areas", required=True)
    a.add_argument("--years", required=True, help="e.g. 2011-2024")
    a.add_argument("--crosswalk")
    a.add_argument("--municipal", help="table municipality_id,year,variable,value")
    a.add_argument("--mean-variable", action="append", default=[],
                   help="municipal variable averaged instead of summed (repeatable)")
    a.add_argument("--landcover", help="table x,y,product,snapshot,class")
    a.add_argument("--dem", help="table x,y,elevation")
    a.add_argument("--cell-area", type=float, help="land-cover cell area (inferred when omitted)")

    for name, help_ in (("survey-weights", "weights through the fallback hierarchy"),
                        ("survey-estimate", "weights plus direct domain estimates")):
        s = sub.add_parser(name, parents=[common], help=help_)
        s.add_argument("--census", required=True, help="table municipality_id,size,spec,year,N")
        s.add_argument("--sample", required=True, help="table farm_id,d,s,t,y,<variables>")
        s.add_argument("--crosswalk", required=True)
        s.add_argument("--years", help="domain years (default: years in the sample)")

    g = sub.add_parser("gvf", parents=[common], help="variance-function smoothing of direct variances")
    g.add_argument("--estimates", required=True)

    b = sub.add_parser("panel-build", parents=[common], help="join fragments into the panel")
    b.add_argument("--fragment", action="append", default=[], metavar="[SOURCE=]PATH",
                   help="long table area_id,year,variable,value[,source] (repeatable)")
    b.add_argument("--predictions", action="append", default=[], help="krige predictions table (repeatable)")
    b.add_argument("--areas", help="GeoJSON fixing the area list")
    b.add_argument("--years", help="year list fixing the panel span")

    v = sub.add_parser("validate", parents=[common], help="plausibility checks on a panel")
    v.add_argument("--panel", required=True, help="long-format panel table")
    v.add_argument("--fidelity", help="fidelity table from krige")
    v.add_argument("--strict", action="store_true", help="exit 5 when any check fails")

    d = sub.add_parser("demo", parents=[common], help="synthetic end-to-end run")
    d.add_argument("--strict", action="store_true")
    return p


def _config(args) -> RunConfig:
    overrides = {"seed": args.seed, "workers": args.workers}
    if args.out:
        overrides["paths.output"] = args.out
    return load_config(args.config, overrides)


def _finish(out: Path, command: str, cfg: RunConfig, inputs: dict, outputs: dict, results: dict) -> None:
    manifest = pl.build_manifest(command, cfg, inputs, outputs, results)
    write_json(out / "manifest.json", manifest)


def cmd_krige(args, cfg: RunConfig, out: Path) -> int:
    areas = pl.load_areas(args.areas)
    variables = args.variables or cfg.krige_variables
    fields = pl.read_fields(pl.require(args.field), variables)
    if not fields:
        raise HarmonizeError("no field matched the requested variables")
    res = pl.krige_fields(fields, areas, cfg)
    outputs = {
        "predictions": write_table(out / "predictions.csv", pl.PREDICTION_HEADER, res.predictions),
        "cv_table": write_table(out / "cv_table.csv", pl.CV_HEADER, res.cv_rows),
        "fidelity": write_table(out / "fidelity.csv", pl.FIDELITY_HEADER, res.fidelity),
        "fragment": write_table(out / "kriging_fragment.csv", pl.FRAGMENT_HEADER,
                                pl.prediction_fragment(res.predictions)),
    }
    _finish(out, "krige", cfg, {"field": Path(args.field), "areas": Path(args.areas)}, outputs,
            {"kriging": res.chosen})
    return EXIT_OK


def cmd_temporal(args, cfg, out) -> int:
    obs = pl.read_observations(args.observations)
    res = pl.aggregate_temporal(obs, cfg)
    outputs = {
        "summary": write_table(out / "summary.csv", pl.SUMMARY_HEADER, res.rows),
        "issues": write_table(out / "temporal_issues.csv",
                              ["cell_id", "year", "season", "variable", "message"], res.issues),
    }
    _finish(out, "aggregate-temporal", cfg, {"observations": Path(args.observations)}, outputs,
            {"temporal": {"series": res.n_series, "issues": len(res.issues)}})
    return EXIT_OK


def cmd_areal(args, cfg, out) -> int:
    areas = pl.load_areas(args.areas)
    years = pl.parse_years(args.years)
    inputs = {"areas": Path(args.areas)}
    rows = []
    if args.municipal:
        if not args.crosswalk:
            raise ConfigError("--municipal needs --crosswalk")
        xw = pl.load_crosswalk(args.crosswalk)
        rows += pl.municipal_fragment(read_table(args.municipal, ["municipality_id", "year", "variable", "value"]),
                                      xw, args.mean_variable, years)
        inputs.update(municipal=Path(args.municipal), crosswalk=Path(args.crosswalk))
    if args.landcover:
        lc = pl.read_columns(args.landcover, ["x", "y", "product", "snapshot", "class"])
        rows += pl.landcover_fragment(lc, areas, years, args.cell_area)
        inputs["landcover"] = Path(args.landcover)
    if args.dem:
        rows += pl.elevation_fragment(pl.read_columns(args.dem, ["x", "y", "elevation"]), areas, years)
        inputs["dem"] = Path(args.dem)
    if len(inputs) == 1:
        raise ConfigError("aggregate-areal needs at least one of --municipal, --landcover, --dem")
    outputs = {"fragment": write_table(out / "areal_fragment.csv", pl.FRAGMENT_HEADER, rows)}
    _finish(out, "aggregate-areal", cfg, inputs, outputs,
            {"areal": {"years": years, "mean_variables": sorted(args.mean_variable)}})
    return EXIT_OK


def _survey_inputs(args):
    xw = pl.load_crosswalk(args.crosswalk)
    census = read_table(args.census, ["municipality_id", "size", "spec", "year", "N"])
    sample = read_table(args.sample, ["farm_id", "d", "s", "t", "y"])
    return pl.survey_domains(census, sample, xw, pl.parse_years(args.years))


def _method_counts(weight_rows) -> dict:
    counts: dict[str, int] = {}
    for r in weight_rows:
        counts[r[5]] = counts.get(r[5], 0) + 1
    return dict(sorted(counts.items()))


def cmd_survey(args, cfg, out) -> int:
    domains, variables = _survey_inputs(args)
    res = pl.run_survey(domains, variables if args.command == "survey-estimate" else [], cfg)
    outputs = {"weights": write_table(out / "weights.csv", pl.WEIGHT_HEADER, res.weights)}
    if args.command == "survey-estimate":
        outputs["estimates"] = write_table(out / "estimates.csv", pl.ESTIMATE_HEADER, res.estimates)
        outputs["fragment"] = write_table(out / "survey_fragment.csv", pl.FRAGMENT_HEADER, res.fragment)
    inputs = {"census": Path(args.census), "sample": Path(args.sample), "crosswalk": Path(args.crosswalk)}
    _finish(out, args.command, cfg, inputs, outputs,
            {"survey": {"domains": len(domains), "variables": variables,
                        "weight_methods": _method_counts(res.weights)}})
    return EXIT_OK


def cmd_gvf(args, cfg, out) -> int:
    res = pl.run_gvf(pl.read_estimates(args.estimates), cfg)
    outputs = {
        "candidates": write_table(out / "gvf_candidates.csv", pl.GVF_CANDIDATE_HEADER, res.candidates),
        "variances": write_table(out / "gvf_variances.csv", pl.GVF_VARIANCE_HEADER, res.variances),
        "models": write_json(out / "gvf_models.json", res.models),
        "fragment": write_table(out / "gvf_fragment.csv", pl.FRAGMENT_HEADER, res.fragment),
    }
    _finish(out, "gvf", cfg, {"estimates": Path(args.estimates)}, outputs,
            {"gvf": {"chosen": {v: (None if m is None else f"{m['response']}:{m['precision_spec']}")
                                for v, m in res.models.items()},
                     "quantile_method": "linear", "band_tolerance": cfg.tolerances.gvf_band}})
    return EXIT_OK


def _write_panel(out: Path, panel) -> dict:
    header, wide = panel.wide_rows()
    return {
        "panel_wide": write_table(out / "panel_wide.csv", header, wide),
        "panel_long": write_table(out / "panel_long.csv", pl.FRAGMENT_HEADER, pl.panel_long_rows(panel)),
        "missing_report": write_table(out / "missing_report.csv", pl.MISSING_HEADER, pl.missing_rows(panel)),
    }


def cmd_panel(args, cfg, out) -> int:
    frags, inputs = [], {}
    for i, spec in enumerate(args.fragment):
        src, _, path = spec.rpartition("=")
        frags += pl.read_fragments(path, src or None)
        inputs[f"fragment_{i}"] = Path(path)
    for i, path in enumerate(args.predictions):
        frags += pl.fragments_from_rows(pl.prediction_fragment(pl.read_predictions(path)))
        inputs[f"predictions_{i}"] = Path(path)
    if not frags:
        raise ConfigError("panel-build needs at least one --fragment or --predictions")
    area_ids = None
    if args.areas:
        area_ids = [a.id for a in pl.load_areas(args.areas)]
        inputs["areas"] = Path(args.areas)
    panel = assemble(frags, area_ids, pl.parse_years(args.years))
    outputs = _write_panel(out, panel)
    _finish(out, "panel-build", cfg, inputs, outputs,
            {"panel": {"areas": len(panel.areas), "years": panel.years,
                       "columns": [f"{s}:{v}" for s, v in panel.columns]}})
    return EXIT_OK


def cmd_validate(args, cfg, out) -> int:
    panel = pl.read_panel(args.panel)
    inputs = {"panel": Path(args.panel)}
    fidelity = None
    if args.fidelity:
        fidelity = pl.fidelity_pairs(pl.read_fidelity(args.fidelity))
        inputs["fidelity"] = Path(args.fidelity)
    rows = pl.run_validation(panel, cfg, fidelity)
    outputs = {"violations": write_table(out / "violations.csv", pl.VIOLATION_HEADER, rows)}
    _finish(out, "validate", cfg, inputs, outputs, {"validate": {"violations": len(rows), "strict": args.strict}})
    for r in rows[:20]:
        log.warning("%s: %s", r[0], r[5])
    if args.strict:
        pl.strict_check(rows)
    return EXIT_OK


def cmd_demo(args, cfg, out) -> int:
    from .demo import run_demo
    run_demo(cfg, out, strict=args.strict)
    return EXIT_OK


HANDLERS = {
    "krige": cmd_krige,
    "aggregate-temporal": cmd_temporal,
    "aggregate-areal": cmd_areal,
    "survey-weights": cmd_survey,
    "survey-estimate": cmd_survey,
    "gvf": cmd_gvf,
    "panel-build": cmd_panel,
    "validate": cmd_validate,
    "demo": cmd_demo,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        out = cfg.output_dir
        out.mkdir(parents=True, exist_ok=True)
        started = time.perf_counter()
        code = HANDLERS[args.command](args, cfg, out)
        log.info("%s finished in %.2f s", args.command, time.perf_counter() - started)
        return code
    except ConfigError as exc:
        _diagnostic("ConfigError", str(exc))
        return EXIT_CONFIG
    except (MissingInputError, FileNotFoundError) as exc:
        _diagnostic("MissingInput", str(exc))
        return EXIT_MISSING
    except ValidationFailure as exc:
        _diagnostic("ValidationFailure", str(exc))
        return EXIT_STRICT
    except (HarmonizeError, ValueError, KeyError) as exc:
        _diagnostic(type(exc).__name__, str(exc))
        return EXIT_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
