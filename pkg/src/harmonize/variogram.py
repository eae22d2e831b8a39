"""
Isotropic semivariogram families, the Matheron empirical estimator and a
weighted least-squares model fit.

Families are addressed by name. ``"matern(1.5)"`` style names select the
closed-form Matern models; plain ``"matern"`` means smoothness = 1.5.
"""

from __future__ import annotations

import math
import re
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import least_squares
from scipy.spatial.distance import pdist

from .errors import DomainError, EmptyVariogramError, FitFailureError, InsufficientDataError

FAMILIES = ("spherical", "exponential", "gaussian", "matern")
MATERN_SMOOTHNESS = (0.5, 1.5, 2.5)
DEFAULT_N_LAGS = 15
PURE_NUGGET_RTOL = 1e-8

_MATERN_RE = re.compile(r"^matern(?:\(?\s*(?:smoothness\s*=\s*)?([0-9.]+)\s*\)?)?$")


def parse_family(name: str) -> tuple[str, float | None]:
    """Split a family name into ``(family, smoothness)``."""
    key = name.strip().lower()
    if key in ("spherical", "exponential", "gaussian"):
        return key, None
    m = _MATERN_RE.match(key.replace("_", ""))
    if m:
        smoothness = float(m.group(1)) if m.group(1) else 1.5
        if smoothness not in MATERN_SMOOTHNESS:
            raise ValueError(f"matern smoothness {smoothness} has no closed form (use one of {MATERN_SMOOTHNESS})")
        return "matern", smoothness
    raise ValueError(f"unknown variogram family {name!r}")


def family_label(family: str, smoothness: float | None = None) -> str:
    return f"matern({smoothness})" if family == "matern" else family


@dataclass(frozen=True)
class VariogramSpec:
    family: str
    nugget: float
    psill: float
    range: float
    smoothness: float | None = None
    pure_nugget: bool = False

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.family == "matern":
            if self.smoothness is None:
                object.__setattr__(self, "smoothness", 1.5)
            if self.smoothness not in MATERN_SMOOTHNESS:
                raise ValueError(f"matern smoothness must be one of {MATERN_SMOOTHNESS}")
        elif self.smoothness is not None:
            object.__setattr__(self, "smoothness", None)
        if not (self.nugget >= 0 and self.psill >= 0):
            raise ValueError("nugget and partial sill must be non-negative")
        if not self.range > 0:
            raise ValueError("range must be positive")

    @classmethod
    def from_name(cls, name, nugget, psill, range, **kw) -> "VariogramSpec":
        family, smoothness = parse_family(name)
        return cls(family, nugget, psill, range, smoothness=smoothness, **kw)

    @property
    def sill(self) -> float:
        return self.nugget + self.psill

    @property
    def label(self) -> str:
        return family_label(self.family, self.smoothness)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["label"] = self.label
        return d


def _correlation(family: str, smoothness: float | None, r: np.ndarray) -> np.ndarray:
    """Structured-component correlation at scaled lag ``r = h / a``."""
    if family == "exponential" or (family == "matern" and smoothness == 0.5):
        return np.exp(-r)
    if family == "gaussian":
        return np.exp(-(r * r))
    if family == "spherical":
        return np.where(r <= 1.0, 1.0 - 1.5 * r + 0.5 * r ** 3, 0.0)
    if family == "matern":
        if smoothness == 1.5:
            s = math.sqrt(3.0) * r
            return (1.0 + s) * np.exp(-s)
        if smoothness == 2.5:
            s = math.sqrt(5.0) * r
            return (1.0 + s + s * s / 3.0) * np.exp(-s)
    raise ValueError(f"unsupported family {family}/{smoothness}")


def _check_lags(h) -> np.ndarray:
    h = np.asarray(h, dtype=float)
    if np.any(h < 0) or np.any(np.isnan(h)):
        raise DomainError("lag distances must be non-negative")
    return h


def semivariance(spec: VariogramSpec, h):
    """gamma(h); zero at the origin, nugget jump for h > 0."""
    h = _check_lags(h)
    rho = _correlation(spec.family, spec.smoothness, h / spec.range)
    g = np.where(h > 0, spec.nugget + spec.psill * (1.0 - rho), 0.0)
    return float(g) if g.ndim == 0 else g


def covariance(spec: VariogramSpec, h):
    """C(h) = sill - gamma(h), with C(0) = nugget + partial sill."""
    h = _check_lags(h)
    rho = _correlation(spec.family, spec.smoothness, h / spec.range)
    c = np.where(h > 0, spec.psill * rho, spec.sill)
    return float(c) if c.ndim == 0 else c


@dataclass(frozen=True)
class EmpiricalVariogram:
    lags: np.ndarray
    gamma: np.ndarray
    counts: np.ndarray

    @property
    def bins(self) -> list[tuple[float, float, int]]:
        return [(float(h), float(g), int(n)) for h, g, n in zip(self.lags, self.gamma, self.counts)]

    def __len__(self):
        return len(self.lags)


def default_cutoff(coords) -> float:
    xy = np.asarray(coords, dtype=float).reshape(-1, 2)
    span = xy.max(axis=0) - xy.min(axis=0)
    return float(np.hypot(*span)) / 3.0


def empirical_variogram(field, n_lags: int = DEFAULT_N_LAGS, cutoff: float | None = None) -> EmpiricalVariogram:
    """Matheron estimator on equal-width lag bins up to ``cutoff``.

    Empty bins are dropped; each retained bin reports the mean pair distance.
    """
    coords, values = field.coords, field.values
    if len(values) < 2:
        raise InsufficientDataError("need at least 2 samples for a variogram")
    if n_lags < 1:
        raise ValueError("n_lags must be >= 1")
    if cutoff is None:
        cutoff = default_cutoff(coords)
    d = pdist(coords)
    sq = pdist(values[:, None], "sqeuclidean")
    keep = d <= cutoff
    if not keep.any() or not cutoff > 0:
        raise EmptyVariogramError("no sample pair within the cutoff")
    d, sq = d[keep], sq[keep]
    idx = np.minimum((d / cutoff * n_lags).astype(int), n_lags - 1)
    counts = np.bincount(idx, minlength=n_lags)
    dsum = np.bincount(idx, weights=d, minlength=n_lags)
    sqsum = np.bincount(idx, weights=sq, minlength=n_lags)
    nz = counts > 0
    return EmpiricalVariogram(
        lags=dsum[nz] / counts[nz],
        gamma=sqsum[nz] / (2.0 * counts[nz]),
        counts=counts[nz],
    )


def wls_objective(emp: EmpiricalVariogram, spec: VariogramSpec) -> float:
    h = np.asarray(emp.lags, dtype=float)
    w = emp.counts / np.maximum(h, 1e-300) ** 2
    r = emp.gamma - semivariance(spec, h)
    return float(np.sum(w * r * r))


def fit_variogram(emp: EmpiricalVariogram, family: str, data_variance: float,
                  max_distance: float, max_nfev: int = 400) -> VariogramSpec:
    """Weighted least-squares fit with weights ``N_j / h_j**2``.

    Bounded trust-region least squares from the fixed start
    ``(nugget=0, psill=data_variance, range=max_distance/3)``. The returned
    spec never scores worse than the start.
    """
    if len(emp) < 3:
        raise InsufficientDataError(f"need at least 3 lag bins, got {len(emp)}")
    fam, smoothness = parse_family(family)
    h = np.asarray(emp.lags, dtype=float)
    g = np.asarray(emp.gamma, dtype=float)
    sw = np.sqrt(emp.counts) / np.maximum(h, 1e-300)
    a0 = max_distance / 3.0 if max_distance > 0 else float(h.max())
    data_variance = max(float(data_variance), 0.0)
    start = VariogramSpec(fam, 0.0, data_variance, a0, smoothness=smoothness)

    scale = max(data_variance, float(g.max()), 0.0)
    if scale == 0.0:
        return VariogramSpec(fam, 0.0, 0.0, a0, smoothness=smoothness, pure_nugget=True)

    def resid(p):
        rho = _correlation(fam, smoothness, h / (p[2] * a0))
        return sw * (g / scale - (p[0] + p[1] * (1.0 - rho)))

    x0 = np.array([0.0, data_variance / scale, 1.0])
    lo = np.array([0.0, 0.0, 1e-6])
    hi = np.array([np.inf, np.inf, np.inf])
    x0 = np.clip(x0, lo, None)
    x0[0] = 0.0
    try:
        res = least_squares(resid, x0, bounds=(lo, hi), method="trf",
                            max_nfev=max_nfev, xtol=1e-12, ftol=1e-12, gtol=1e-12)
    except (ValueError, FloatingPointError) as exc:
        raise FitFailureError(str(exc)) from exc
    if not np.all(np.isfinite(res.x)) or not np.isfinite(res.cost):
        raise FitFailureError("non-finite variogram objective")
    c0, c, a = res.x[0] * scale, res.x[1] * scale, res.x[2] * a0
    fitted = VariogramSpec(fam, float(c0), float(c), float(a), smoothness=smoothness)
    if wls_objective(emp, fitted) > wls_objective(emp, start):
        fitted = start
    pure = fitted.psill <= PURE_NUGGET_RTOL * max(fitted.sill, scale)
    if pure:
        fitted = VariogramSpec(fam, fitted.nugget, fitted.psill, fitted.range, smoothness=smoothness, pure_nugget=True)
    return fitted


def fit_field(field, family: str, n_lags: int = DEFAULT_N_LAGS, cutoff: float | None = None) -> VariogramSpec:
    """Empirical variogram plus fit with the default start values."""
    emp = empirical_variogram(field, n_lags=n_lags, cutoff=cutoff)
    xy = field.coords
    span = xy.max(axis=0) - xy.min(axis=0)
    max_distance = float(np.hypot(*span))
    var = float(np.var(field.values, ddof=1)) if len(field) > 1 else 0.0
    return fit_variogram(emp, family, var, max_distance)
