"""
Generalized variance functions: log-linear models of direct variances,
candidate selection, prediction and sample-size blending.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import GvfUnavailableError

RESPONSES = ("variance", "relvariance")
PRECISION_SPECS = ("log_n", "log_n_over_N", "log_n_plus_log_N")
MIN_DOMAIN_N = 3
MIN_ESTIMATION_DOMAINS = 10
BAND_TOLERANCE = 0.05
INCREASE_THRESHOLD = 1.05
UPPER_QUANTILE = 0.75


@dataclass(frozen=True)
class GvfDomain:
    """Inputs the GVF needs about one area-year domain."""

    area: str
    year: int
    estimate: float
    var_direct: float
    n: int
    N: float


@dataclass
class GvfModel:
    response: str
    precision_spec: str
    coefficients: dict
    area_effects: dict
    year_effects: dict
    fit_metrics: dict = field(default_factory=dict)
    n_fit: int = 0

    @property
    def name(self) -> str:
        return f"{self.response}:{self.precision_spec}"

    def linear_predictor(self, estimate, n, N, area=None, year=None) -> float:
        c = self.coefficients
        log_scale = c["intercept"]
        if self.response == "variance":
            log_scale += c["estimate_slope"] * math.log(estimate)
        if self.precision_spec == "log_n":
            log_scale += c["precision_slope"] * math.log(n)
        elif self.precision_spec == "log_n_over_N":
            log_scale += c["precision_slope"] * math.log(n / N)
        else:
            log_scale += c["precision_slope"] * math.log(n) + c["population_slope"] * math.log(N)
        log_scale += self.area_effects.get(area, 0.0) + self.year_effects.get(year, 0.0)
        return log_scale

    def describe(self) -> dict:
        return {"response": self.response, "precision_spec": self.precision_spec,
                "coefficients": dict(self.coefficients), "area_effects": dict(self.area_effects),
                "year_effects": {str(k): v for k, v in self.year_effects.items()},
                "fit_metrics": dict(self.fit_metrics), "n_fit": self.n_fit}


def _precision_columns(spec, n, N):
    if spec == "log_n":
        return [np.log(n)], ["precision_slope"]
    if spec == "log_n_over_N":
        return [np.log(n / N)], ["precision_slope"]
    if spec == "log_n_plus_log_N":
        return [np.log(n), np.log(N)], ["precision_slope", "population_slope"]
    raise ValueError(f"unknown precision spec {spec!r}")


def _effect_coding(labels):
    """Sum-to-zero indicator columns; the last level is minus the others."""
    levels = sorted(set(labels), key=str)
    if len(levels) < 2:
        return np.zeros((len(labels), 0)), levels
    X = np.zeros((len(labels), len(levels) - 1))
    pos = {lv: i for i, lv in enumerate(levels)}
    for r, lv in enumerate(labels):
        k = pos[lv]
        if k == len(levels) - 1:
            X[r, :] = -1.0
        else:
            X[r, k] = 1.0
    return X, levels


def _usable_for_fit(dom: GvfDomain, response: str) -> bool:
    if dom.n < MIN_DOMAIN_N or not dom.var_direct > 0 or not dom.N >= dom.n:
        return False
    if response == "variance":
        return dom.estimate > 0
    return dom.estimate != 0 and math.isfinite(dom.estimate)


def fit_gvf(domains: Sequence[GvfDomain], response: str, precision_spec: str,
            group_effects: bool = True) -> GvfModel:
    """Least-squares GVF with sum-to-zero area and year effects.

    Only domains with ``n >= 3`` and a positive direct variance (and a
    positive estimate for the variance response) enter the fit.
    """
    if response not in RESPONSES:
        raise ValueError(f"unknown response {response!r}")
    rows = [d for d in domains if _usable_for_fit(d, response)]
    if len(rows) < MIN_ESTIMATION_DOMAINS:
        raise GvfUnavailableError(f"only {len(rows)} usable domains for the GVF fit")
    n = np.array([d.n for d in rows], dtype=float)
    N = np.array([d.N for d in rows], dtype=float)
    Y = np.array([d.estimate for d in rows], dtype=float)
    V = np.array([d.var_direct for d in rows], dtype=float)
    cols = [np.ones(len(rows))]
    names = ["intercept"]
    if response == "variance":
        z = np.log(V)
        cols.append(np.log(Y))
        names.append("estimate_slope")
    else:
        z = np.log(V / Y ** 2)
    pc, pn = _precision_columns(precision_spec, n, N)
    cols += pc
    names += pn
    Xa, area_levels = _effect_coding([d.area for d in rows]) if group_effects else (np.zeros((len(rows), 0)), [])
    Xy, year_levels = _effect_coding([d.year for d in rows]) if group_effects else (np.zeros((len(rows), 0)), [])
    X = np.column_stack(cols + [Xa, Xy])
    coef, *_ = np.linalg.lstsq(X, z, rcond=None)
    if not np.all(np.isfinite(coef)):
        raise GvfUnavailableError("non-finite GVF coefficients")
    k = len(names)
    fixed = {nm: float(c) for nm, c in zip(names, coef[:k])}
    ua = coef[k:k + Xa.shape[1]]
    uy = coef[k + Xa.shape[1]:]
    area_eff = _unpack(area_levels, ua)
    year_eff = _unpack(year_levels, uy)
    resid = z - X @ coef
    model = GvfModel(response, precision_spec, fixed, area_eff, year_eff, n_fit=len(rows))
    model.fit_metrics["residual_rmse"] = float(np.sqrt(np.mean(resid ** 2)))
    return model


def _unpack(levels, coefs):
    if len(levels) < 2:
        return {lv: 0.0 for lv in levels}
    eff = {lv: float(c) for lv, c in zip(levels[:-1], coefs)}
    eff[levels[-1]] = float(-np.sum(coefs))
    return eff


def predict_variance(model: GvfModel, estimate: float, n: int, N: float,
                     area=None, year=None) -> tuple[float, bool]:
    """GVF variance for one domain; no log back-transform bias correction.

    Returns ``(var_gvf, degenerate)``. The degenerate flag marks a relative
    variance model applied to a zero estimate (variance forced to 0) or a
    variance model applied to a non-positive estimate (NaN).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    N = max(N, n)
    if model.response == "relvariance":
        if estimate == 0:
            return 0.0, True
        return math.exp(model.linear_predictor(estimate, n, N, area, year)) * estimate ** 2, False
    if estimate <= 0:
        return math.nan, True
    return math.exp(model.linear_predictor(estimate, n, N, area, year)), False


def blend_weight(n: int) -> float:
    if n <= 1:
        return 1.0
    if n == 2:
        return 0.5
    return 0.0


def blend(var_direct: float, var_gvf: float, n: int) -> float:
    w = blend_weight(n)
    if w == 0.0:
        return var_direct
    if w == 1.0:
        return var_gvf
    return w * var_gvf + (1.0 - w) * var_direct


@dataclass(frozen=True)
class VarianceTriple:
    var_direct: float
    var_gvf: float
    var_final: float
    n: int

    @property
    def weight(self) -> float:
        return blend_weight(self.n)


def selection_metrics(direct, gvf, blended) -> dict:
    """RMSE on the log scale, upper-tail median reduction and increase share.

    Domains with a non-positive direct (or GVF, for the log term) variance
    are left out of the affected metric; the number left out is reported.
    """
    V = np.asarray(direct, dtype=float)
    G = np.asarray(gvf, dtype=float)
    F = np.asarray(blended, dtype=float)
    log_ok = (V > 0) & (G > 0) & np.isfinite(V) & np.isfinite(G)
    rmse_log = float(np.sqrt(np.mean((np.log(V[log_ok]) - np.log(G[log_ok])) ** 2))) if log_ok.any() else math.inf
    ratio_ok = (V > 0) & np.isfinite(V) & np.isfinite(F)
    if ratio_ok.any():
        Vr, Fr = V[ratio_ok], F[ratio_ok]
        q = np.quantile(Vr, UPPER_QUANTILE, method="linear")
        R = Fr[Vr >= q] / Vr[Vr >= q]
        reduction_upper = float(np.median(R))
        increase_share = float(np.mean(Fr / Vr > INCREASE_THRESHOLD))
    else:
        reduction_upper = increase_share = math.inf
    return {"rmse_log": rmse_log, "reduction_upper": reduction_upper,
            "increase_share": increase_share,
            "excluded_log": int((~log_ok).sum()), "excluded_ratio": int((~ratio_ok).sum())}


def select_model(candidates: Sequence[GvfModel], band_tolerance: float = BAND_TOLERANCE) -> GvfModel:
    """Keep the RMSE band, then minimize reduction, increase share, RMSE."""
    finite = [m for m in candidates
              if all(math.isfinite(m.fit_metrics.get(k, math.inf))
                     for k in ("rmse_log", "reduction_upper", "increase_share"))]
    if not finite:
        raise GvfUnavailableError("no candidate GVF with finite metrics")
    best_rmse = min(m.fit_metrics["rmse_log"] for m in finite)
    band = [m for m in finite if m.fit_metrics["rmse_log"] <= best_rmse * (1.0 + band_tolerance)]
    # min() keeps the first of equal keys, so candidate order breaks final ties
    return min(band, key=lambda m: (m.fit_metrics["reduction_upper"],
                                    m.fit_metrics["increase_share"],
                                    m.fit_metrics["rmse_log"]))


@dataclass
class GvfResult:
    model: GvfModel | None
    candidates: list
    triples: list  # (GvfDomain, VarianceTriple, degenerate)


def regularize(domains: Sequence[GvfDomain], band_tolerance: float = BAND_TOLERANCE,
               responses=RESPONSES, precision_specs=PRECISION_SPECS) -> GvfResult:
    """Fit every candidate, score it with its blend, select, then blend.

    When no candidate can be fitted the direct variances are kept (where
    defined) and ``model`` is None.
    """
    candidates = []
    for resp in responses:
        for spec in precision_specs:
            try:
                m = fit_gvf(domains, resp, spec)
            except GvfUnavailableError as exc:
                candidates.append((resp, spec, str(exc)))
                continue
            gv = [_predict_or_nan(m, d)[0] for d in domains]
            fin = [blend(d.var_direct, g, d.n) for d, g in zip(domains, gv)]
            m.fit_metrics.update(selection_metrics([d.var_direct for d in domains], gv, fin))
            candidates.append(m)
    models = [c for c in candidates if isinstance(c, GvfModel)]
    try:
        chosen = select_model(models, band_tolerance) if models else None
    except GvfUnavailableError:
        chosen = None
    triples = []
    for d in domains:
        if chosen is None:
            g, degen = math.nan, False
            final = d.var_direct if d.n >= MIN_DOMAIN_N else math.nan
        else:
            g, degen = _predict_or_nan(chosen, d)
            final = blend(d.var_direct, g, d.n)
        triples.append((d, VarianceTriple(d.var_direct, g, final, d.n), degen))
    return GvfResult(chosen, candidates, triples)


def _predict_or_nan(model, d: GvfDomain):
    if d.n < 1 or not math.isfinite(d.estimate):
        return math.nan, True
    return predict_variance(model, d.estimate, d.n, d.N, d.area, d.year)
