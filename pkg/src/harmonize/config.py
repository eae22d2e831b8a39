"""
Run configuration: one JSON document with explicit defaults, optionally
overridden by command-line flags.

Example::

    {
      "seed": 7,
      "paths": {"output": "out"},
      "tuning": {"folds": 5, "nmax_grid": [8, 16, 32, 64]},
      "tolerances": {"rake_tol": 1e-8, "gvf_band": 0.05, "share_tol": 1e-6},
      "season_rule": "december-own-year",
      "magnus": {"a": 17.625, "b": 243.04},
      "wd_convention": "ccw-from-south",
      "workers": 1
    }
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .errors import ConfigError
from .temporal import MAGNUS_A, MAGNUS_B, SEASON_RULES
from .tuning import TuningConfig

OUTPUT_ENV = "HARMONIZE_OUTPUT_DIR"
WD_CONVENTIONS = ("ccw-from-south", "meteorological")

DEFAULT_UNIT_RULES = {"t2m": "K_to_C", "d2m": "K_to_C", "tp": "m_to_mm", "sf": "m_to_mm",
                      "ro": "m_to_mm", "sro": "m_to_mm", "ssro": "m_to_mm"}

# Where each numeric default comes from. "method" marks constants taken
# from the harmonization method this package implements; "artifact" marks
# choices made for this implementation.
ORIGINS = {
    "tuning.families": "method: candidate covariance families",
    "tuning.nmax_grid": "method: candidate neighbourhood sizes",
    "tuning.folds": "method: random 5-fold cross-validation",
    "tuning.repeats": "artifact: single repeat",
    "tuning.initial_nmax": "artifact: neighbourhood size used while choosing the family",
    "tuning.spacing": "artifact: sqrt(area)/4 when unset",
    "tuning.n_lags": "artifact: empirical variogram lag count",
    "tolerances.gvf_band": "method: relative RMSE band for variance-function selection",
    "tolerances.rake_tol": "artifact: raking convergence tolerance",
    "tolerances.rake_max_iter": "artifact: raking iteration cap",
    "tolerances.share_tol": "method: shares must sum to 100",
    "tolerances.fidelity_threshold": "artifact: minimum kriging fidelity correlation",
    "magnus.a": "method: Magnus saturation vapour pressure constant",
    "magnus.b": "method: Magnus saturation vapour pressure constant (degC)",
    "season_rule": "artifact: December kept in its own calendar year",
    "wd_convention": "method: wind direction as 180 minus the bearing of the wind vector",
    "coordinate_unit": "artifact: unit of every coordinate; no reprojection is performed",
}


@dataclass(frozen=True)
class Tolerances:
    rake_tol: float = 1e-8
    rake_max_iter: int = 1000
    gvf_band: float = 0.05
    share_tol: float = 1e-6
    fidelity_threshold: float = 0.9

    def __post_init__(self):
        for name in ("rake_tol", "gvf_band", "share_tol"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"tolerance {name} must be > 0")
        if self.rake_max_iter < 1:
            raise ConfigError("rake_max_iter must be >= 1")
        if not -1.0 <= self.fidelity_threshold <= 1.0:
            raise ConfigError("fidelity_threshold must lie in [-1, 1]")


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    paths: Mapping[str, str] = field(default_factory=dict)
    tuning: TuningConfig = field(default_factory=TuningConfig)
    tolerances: Tolerances = field(default_factory=Tolerances)
    season_rule: str = "december-own-year"
    magnus: tuple[float, float] = (MAGNUS_A, MAGNUS_B)
    wd_convention: str = "ccw-from-south"
    unit_rules: Mapping[str, str] = field(default_factory=lambda: dict(DEFAULT_UNIT_RULES))
    krige_variables: tuple[str, ...] | None = None
    workers: int = 1
    coordinate_unit: str = "projected-units"

    def __post_init__(self):
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        if self.season_rule not in SEASON_RULES:
            raise ConfigError(f"season_rule must be one of {SEASON_RULES}")
        if self.wd_convention not in WD_CONVENTIONS:
            raise ConfigError(f"wd_convention must be one of {WD_CONVENTIONS}")
        a, b = self.magnus
        if not (a > 0 and b > 0):
            raise ConfigError("Magnus constants must be positive")
        if not isinstance(self.coordinate_unit, str) or not self.coordinate_unit:
            raise ConfigError("coordinate_unit must be a non-empty string")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        bad = {r for r in self.unit_rules.values() if r not in ("K_to_C", "m_to_mm", "identity")}
        if bad:
            raise ConfigError(f"unknown unit rules {sorted(bad)}")

    @property
    def output_dir(self) -> Path:
        env = os.environ.get(OUTPUT_ENV)
        if env:
            return Path(env)
        return Path(self.paths.get("output", "harmonize-out"))

    def tuning_for(self, seed_offset: int = 0) -> TuningConfig:
        return dataclasses.replace(self.tuning, seed=self.seed + seed_offset)

    def as_manifest(self) -> dict:
        """Settings with their origin tags; paths are left out on purpose."""
        t = self.tuning
        values = {
            "tuning.families": list(t.families),
            "tuning.nmax_grid": list(t.nmax_grid),
            "tuning.folds": t.folds,
            "tuning.repeats": t.repeats,
            "tuning.initial_nmax": t.initial_nmax,
            "tuning.spacing": t.spacing,
            "tuning.n_lags": t.n_lags,
            "tolerances.gvf_band": self.tolerances.gvf_band,
            "tolerances.rake_tol": self.tolerances.rake_tol,
            "tolerances.rake_max_iter": self.tolerances.rake_max_iter,
            "tolerances.share_tol": self.tolerances.share_tol,
            "tolerances.fidelity_threshold": self.tolerances.fidelity_threshold,
            "magnus.a": self.magnus[0],
            "magnus.b": self.magnus[1],
            "season_rule": self.season_rule,
            "wd_convention": self.wd_convention,
            "coordinate_unit": self.coordinate_unit,
        }
        settings = {k: {"value": v, "origin": ORIGINS[k]} for k, v in values.items()}
        return {
            "seed": self.seed,
            "settings": settings,
            "refit_per_fold": t.refit_per_fold,
            "unit_rules": dict(sorted(self.unit_rules.items())),
            "krige_variables": None if self.krige_variables is None else list(self.krige_variables),
        }


_TOP_KEYS = {"seed", "paths", "tuning", "tolerances", "season_rule", "magnus",
             "wd_convention", "unit_rules", "krige_variables", "workers",
             "coordinate_unit"}


def config_from_dict(doc: Mapping) -> RunConfig:
    if not isinstance(doc, Mapping):
        raise ConfigError("configuration must be a JSON object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown configuration keys {sorted(unknown)}")
    try:
        tuning_doc = dict(doc.get("tuning", {}))
        for k in ("families", "nmax_grid"):
            if k in tuning_doc:
                tuning_doc[k] = tuple(tuning_doc[k])
        if "seed" in tuning_doc:
            raise ConfigError("set the seed at top level; it feeds every sub-stream")
        tuning = TuningConfig(**tuning_doc)
        tol = Tolerances(**doc.get("tolerances", {}))
        magnus = doc.get("magnus", {})
        unknown_m = set(magnus) - {"a", "b"}
        if unknown_m:
            raise ConfigError(f"unknown magnus keys {sorted(unknown_m)}")
        kv = doc.get("krige_variables")
        unit_rules = dict(DEFAULT_UNIT_RULES)
        unit_rules.update(doc.get("unit_rules", {}))
        seed = doc.get("seed", 0)
        if isinstance(seed, bool) or not isinstance(seed, int):
            raise ConfigError("seed must be a non-negative integer")
        return RunConfig(
            seed=seed,
            paths=dict(doc.get("paths", {})),
            tuning=tuning,
            tolerances=tol,
            season_rule=doc.get("season_rule", "december-own-year"),
            magnus=(float(magnus.get("a", MAGNUS_A)), float(magnus.get("b", MAGNUS_B))),
            wd_convention=doc.get("wd_convention", "ccw-from-south"),
            unit_rules=unit_rules,
            krige_variables=None if kv is None else tuple(kv),
            workers=int(doc.get("workers", 1)),
            coordinate_unit=doc.get("coordinate_unit", "projected-units"),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path | None = None, overrides: Mapping | None = None) -> RunConfig:
    """Read a JSON config (or start from defaults) and apply flag overrides.

    ``overrides`` uses dotted keys, e.g. ``{"seed": 3, "tuning.folds": 10}``.
    """
    doc: dict = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        try:
            doc = json.loads(p.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed config {p.name}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("configuration must be a JSON object")
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        node = doc
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
    return config_from_dict(doc)
