"""
Cross-validated choice of covariance family and neighbourhood size,
followed by block kriging of every area with the winners.
"""

from __future__ import annotations

import logging
import math
import zlib
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import HarmonizeError, SelectionFailureError
from .geomcore import AreaUnit, GridFieldSnapshot, discretize_block
from .kriging import BlockPrediction, default_spacing, krige_block_points, krige_blocks, krige_points
from .variogram import VariogramSpec, fit_field, parse_family

log = logging.getLogger(__name__)

DEFAULT_FAMILIES = ("spherical", "exponential", "gaussian", "matern(1.5)")
DEFAULT_NMAX_GRID = (8, 16, 32, 64)


@dataclass(frozen=True)
class TuningConfig:
    families: tuple[str, ...] = DEFAULT_FAMILIES
    nmax_grid: tuple[int, ...] = DEFAULT_NMAX_GRID
    folds: int = 5
    repeats: int = 1
    seed: int = 0
    initial_nmax: int = 16
    spacing: float | None = None
    refit_per_fold: bool = True
    n_lags: int = 15

    def __post_init__(self):
        object.__setattr__(self, "families", tuple(self.families))
        object.__setattr__(self, "nmax_grid", tuple(int(n) for n in self.nmax_grid))
        if self.folds < 2:
            raise ValueError("need at least 2 folds")
        if self.repeats < 1:
            raise ValueError("need at least 1 repeat")
        if not self.families:
            raise ValueError("no candidate families")
        if not self.nmax_grid or min(self.nmax_grid) < 1 or self.initial_nmax < 1:
            raise ValueError("neighbourhood sizes must be >= 1")
        if self.spacing is not None and not self.spacing > 0:
            raise ValueError("spacing must be positive")
        for fam in self.families:
            parse_family(fam)


@dataclass
class AlignmentResult:
    predictions: list[BlockPrediction]
    chosen_family: str
    chosen_nmax: int
    cv_table: list[tuple[str, str, float]] = field(default_factory=list)
    specs: dict = field(default_factory=dict)
    final_spec: VariogramSpec | None = None


def fold_assignment(n: int, folds: int, seed: int, repeat: int = 0) -> np.ndarray:
    """Fold label per sample, a function of (seed, n, repeat) only."""
    ss = np.random.SeedSequence([int(seed), zlib.crc32(b"cv-folds"), int(n), int(repeat)])
    perm = np.random.default_rng(ss).permutation(n)
    labels = np.empty(n, dtype=int)
    labels[perm] = np.arange(n) % folds
    return labels


class CrossValidator:
    """Holds fold partitions and per-fold variogram fits for one field.

    Fits depend on (family, repeat, fold) but not on the neighbourhood size,
    so they are cached across the family and nmax stages.
    """

    def __init__(self, field: GridFieldSnapshot, cfg: TuningConfig,
                 predictor: Callable | None = None):
        self.field = field.deduplicated()
        self.cfg = cfg
        n = len(self.field)
        if n < cfg.folds:
            raise SelectionFailureError(f"field has {n} samples, fewer than {cfg.folds} folds")
        self.labels = [fold_assignment(n, cfg.folds, cfg.seed, r) for r in range(cfg.repeats)]
        self._fits: dict = {}
        self._predictor = predictor or self._krige

    def _fit(self, family: str, repeat: int, fold: int) -> VariogramSpec:
        if not self.cfg.refit_per_fold:
            key = (family, None, None)
            if key not in self._fits:
                self._fits[key] = fit_field(self.field, family, n_lags=self.cfg.n_lags)
            return self._fits[key]
        key = (family, repeat, fold)
        if key not in self._fits:
            train = self.field.subset(self.labels[repeat] != fold)
            self._fits[key] = fit_field(train, family, n_lags=self.cfg.n_lags)
        return self._fits[key]

    def _krige(self, spec, train_xy, train_z, test_xy, nmax):
        means, _ = krige_points(spec, train_xy, train_z, test_xy, nmax)
        return means

    def rmse(self, family: str, nmax: int) -> float:
        xy, z = self.field.coords, self.field.values
        per_repeat = []
        for r, labels in enumerate(self.labels):
            sq = 0.0
            for k in range(self.cfg.folds):
                test = labels == k
                try:
                    spec = self._fit(family, r, k)
                    pred = self._predictor(spec, xy[~test], z[~test], xy[test], nmax)
                except HarmonizeError as exc:
                    log.debug("cv fold failed for %s/nmax=%d: %s", family, nmax, exc)
                    return math.inf
                pred = np.asarray(pred, dtype=float)
                if not np.all(np.isfinite(pred)):
                    return math.inf
                sq += float(np.sum((pred - z[test]) ** 2))
            per_repeat.append(math.sqrt(sq / len(z)))
        return float(np.mean(per_repeat))


def cv_rmse(field: GridFieldSnapshot, family: str, nmax: int, cfg: TuningConfig,
            predictor: Callable | None = None) -> float:
    """K-fold cross-validated RMSE of local ordinary point kriging."""
    return CrossValidator(field, cfg, predictor).rmse(family, nmax)


def _argmin(scores: Sequence[tuple[object, float]]):
    best, best_score = None, math.inf
    for cand, score in scores:
        if score < best_score:
            best, best_score = cand, score
    if best is None:
        raise SelectionFailureError("every candidate failed cross-validation")
    return best


def select_family(field, cfg: TuningConfig, cv: CrossValidator | None = None,
                  table: list | None = None) -> str:
    cv = cv or CrossValidator(field, cfg)
    scores = [(fam, cv.rmse(fam, cfg.initial_nmax)) for fam in cfg.families]
    if table is not None:
        table.extend(("family", fam, s) for fam, s in scores)
    return _argmin(scores)


def select_nmax(field, family: str, cfg: TuningConfig, cv: CrossValidator | None = None,
                table: list | None = None) -> int:
    cv = cv or CrossValidator(field, cfg)
    scores = [(n, cv.rmse(family, n)) for n in cfg.nmax_grid]
    if table is not None:
        table.extend(("nmax", str(n), s) for n, s in scores)
    return _argmin(scores)


def align_field(field: GridFieldSnapshot, areas: Sequence[AreaUnit], cfg: TuningConfig,
                block_points: dict | None = None) -> AlignmentResult:
    """Select family, then nmax, then block-krige every area.

    Areas whose system cannot be solved yield a prediction with ``error``
    set and NaN mean/variance; the remaining areas are still produced.
    """
    if not areas:
        raise ValueError("no target areas")
    cv = CrossValidator(field, cfg)
    table: list = []
    family = select_family(field, cfg, cv, table)
    nmax = select_nmax(field, family, cfg, cv, table)
    rmse = dict(((kind, key), s) for kind, key, s in table)[("nmax", str(nmax))]
    spec = fit_field(cv.field, family, n_lags=cfg.n_lags)
    ordered = sorted(areas, key=lambda a: a.id)
    pts = {}
    for area in ordered:
        bp = None if block_points is None else block_points.get(area.id)
        if bp is None:
            bp = discretize_block(area, cfg.spacing or default_spacing(area))
        pts[area.id] = np.asarray(bp, dtype=float).reshape(-1, 2)
    results = {}
    # batch blocks with equal discretization size; fall back per area on failure
    by_size: dict[int, list[str]] = {}
    for aid, bp in pts.items():
        by_size.setdefault(len(bp), []).append(aid)
    for ids in by_size.values():
        try:
            means, variances, k = krige_blocks(spec, cv.field.coords, cv.field.values,
                                               np.stack([pts[a] for a in ids]), nmax)
            for aid, mean, var in zip(ids, means, variances):
                results[aid] = BlockPrediction(aid, float(mean), float(var), k, spec.label, nmax, rmse)
        except HarmonizeError:
            for aid in ids:
                results[aid] = _predict_one(spec, cv.field, aid, pts[aid], nmax, rmse)
    preds = [results[a.id] for a in ordered]
    return AlignmentResult(preds, family, nmax, table, {"final": spec.as_dict()}, spec)


def _predict_one(spec, field, area_id, bp, nmax, rmse) -> BlockPrediction:
    try:
        mean, var, n_used, _ = krige_block_points(spec, field.coords, field.values, bp, nmax)
        return BlockPrediction(area_id, mean, var, n_used, spec.label, nmax, rmse)
    except HarmonizeError as exc:
        log.warning("block kriging failed for area %s: %s", area_id, exc)
        return BlockPrediction(area_id, math.nan, math.nan, 0, spec.label, nmax, rmse,
                               error=type(exc).__name__)
