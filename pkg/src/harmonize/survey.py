"""
Census-based farm population reconstruction, the stratum weighting
hierarchy and Horvitz-Thompson domain estimation.

Strata are the 2 x 3 cross-classification of economic size (rows) and
technical specialization (columns) inside one area-year domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (DomainError, HarmonizeError, InfeasibleSupportError, MarginMismatchError,
                     RakeDivergenceError, UnweightedObservationError)

SIZES = ("small", "large")
SPECS = ("crop", "livestock", "mixed")
SO_FLOOR = 8_000.0
SO_LARGE = 100_000.0
CENSUS_YEARS = (2010, 2020)
FIRST_YEAR, LAST_YEAR = 2011, 2023

# lower rank = better calibration quality when choosing a donor year
METHOD_RANK = {"cell": 0, "rake2d": 1, "rake1d_size": 2, "rake1d_spec": 2, "uniform": 3}
MARGIN_RTOL = 1e-6


def size_class(standard_output: float) -> str | None:
    """Economic size class; farms below the survey floor are out of scope."""
    if standard_output < SO_FLOOR:
        return None
    return "small" if standard_output < SO_LARGE else "large"


def interpolate_population(n_2010: float, n_2020: float, year: int) -> float:
    """Linear between the census counts for 2011-2019, frozen at 2020 after."""
    if not FIRST_YEAR <= year <= LAST_YEAR:
        raise DomainError(f"year {year} outside {FIRST_YEAR}-{LAST_YEAR}")
    if n_2010 < 0 or n_2020 < 0:
        raise DomainError("census counts must be non-negative")
    if year >= 2020:
        return float(n_2020)
    return max(0.0, n_2010 + (n_2020 - n_2010) * (year - 2010) / 10.0)


def reconstruct_strata(census_2010: np.ndarray, census_2020: np.ndarray, year: int) -> np.ndarray:
    """Stratum counts for ``year``: interpolated total times census composition.

    The composition comes from the census nearer in time (2020 on ties).
    """
    c10 = np.asarray(census_2010, dtype=float)
    c20 = np.asarray(census_2020, dtype=float)
    total = interpolate_population(c10.sum(), c20.sum(), year)
    comp_src = c10 if abs(year - 2010) < abs(year - 2020) else c20
    if comp_src.sum() == 0:
        comp_src = c20 if comp_src is c10 else c10
    if comp_src.sum() == 0:
        return np.zeros_like(c10)
    return total * comp_src / comp_src.sum()


@dataclass(frozen=True)
class StratumCount:
    d: str
    s: str
    t: str
    y: int
    N: float
    n: int

    def __post_init__(self):
        if self.s not in SIZES or self.t not in SPECS:
            raise ValueError(f"unknown stratum ({self.s}, {self.t})")
        if self.N < 0 or self.n < 0:
            raise ValueError("counts must be non-negative")


@dataclass(frozen=True)
class WeightRecord:
    d: str
    s: str
    t: str
    y: int
    weight: float
    method: str
    donor_year: int | None = None


def _tables(counts: Iterable[StratumCount]) -> tuple[np.ndarray, np.ndarray]:
    N = np.zeros((2, 3))
    n = np.zeros((2, 3))
    for c in counts:
        i, j = SIZES.index(c.s), SPECS.index(c.t)
        N[i, j] += c.N
        n[i, j] += c.n
    return N, n


def rake_2d(n, row_margins, col_margins, tol: float = 1e-8, max_iter: int = 1000) -> np.ndarray:
    """Iterative proportional fitting of stratum weights to both margins.

    Starts from unit weights and alternates row then column rescaling of
    the weighted counts ``w * n``. Cells with no sample get NaN.
    """
    n = np.asarray(n, dtype=float)
    R = np.asarray(row_margins, dtype=float)
    K = np.asarray(col_margins, dtype=float)
    if not math.isclose(R.sum(), K.sum(), rel_tol=MARGIN_RTOL, abs_tol=1e-12):
        raise MarginMismatchError(f"row total {R.sum()} differs from column total {K.sum()}")
    support = n > 0
    rows_n, cols_n = n.sum(axis=1), n.sum(axis=0)
    if np.any((R > 0) & (rows_n == 0)) or np.any((K > 0) & (cols_n == 0)):
        raise InfeasibleSupportError("positive margin without sample support")
    if np.any((R == 0) & (rows_n > 0)) or np.any((K == 0) & (cols_n > 0)):
        raise InfeasibleSupportError("sampled units in a zero-population margin")
    x = n.copy()
    for _ in range(max_iter):
        rs = x.sum(axis=1)
        x *= np.divide(R, rs, out=np.zeros_like(R), where=rs > 0)[:, None]
        cs = x.sum(axis=0)
        x *= np.divide(K, cs, out=np.zeros_like(K), where=cs > 0)[None, :]
        if (np.max(np.abs(x.sum(axis=1) - R)) < tol and np.max(np.abs(x.sum(axis=0) - K)) < tol):
            break
    else:
        raise RakeDivergenceError(f"raking did not converge in {max_iter} iterations")
    w = np.full(n.shape, np.nan)
    w[support] = x[support] / n[support]
    if np.any(~(w[support] > 0)):
        raise InfeasibleSupportError("raking drove a sampled stratum weight to zero")
    return w


def _axis_weights(n: np.ndarray, margin: np.ndarray, axis: str) -> np.ndarray | None:
    sums = n.sum(axis=1) if axis == "size" else n.sum(axis=0)
    if np.any((margin > 0) & (sums == 0)) or np.any((margin == 0) & (sums > 0)):
        return None
    ratio = np.divide(margin, sums, out=np.zeros_like(margin, dtype=float), where=sums > 0)
    w = np.where(n > 0, ratio[:, None] if axis == "size" else ratio[None, :], np.nan)
    return w


def calibrate_1d(n, N_table) -> tuple[np.ndarray, str]:
    """Single-margin ratio calibration.

    Both the size and specialization axes are tried; when both are feasible
    the one whose weighted cell counts deviate least (max absolute) from
    ``N_table`` wins, size first on ties. Returns ``(weights, method)``.
    """
    n = np.asarray(n, dtype=float)
    N = np.asarray(N_table, dtype=float)
    options = []
    for axis, margin in (("size", N.sum(axis=1)), ("spec", N.sum(axis=0))):
        w = _axis_weights(n, margin, axis)
        if w is not None:
            dev = float(np.max(np.abs(np.nan_to_num(w * n) - N)))
            options.append((dev, axis, w))
    if not options:
        raise InfeasibleSupportError("no margin supports one-dimensional calibration")
    best = min(options, key=lambda o: o[0])
    return best[2], f"rake1d_{best[1]}"


def _own_method(N: np.ndarray, n: np.ndarray, tol: float, max_iter: int):
    """Steps 1-3 of the hierarchy. Returns ``(weights, method)`` or None."""
    sampled = n > 0
    populated = N > 0
    if sampled.any() and np.array_equal(sampled, populated):
        w = np.full(n.shape, np.nan)
        w[sampled] = N[sampled] / n[sampled]
        return w, "cell"
    try:
        return rake_2d(n, N.sum(axis=1), N.sum(axis=0), tol, max_iter), "rake2d"
    except HarmonizeError:
        pass
    try:
        return calibrate_1d(n, N)
    except HarmonizeError:
        return None


def _quality(N: np.ndarray, n: np.ndarray, tol, max_iter) -> int:
    if n.sum() == 0:
        return METHOD_RANK["uniform"] + 1
    own = _own_method(N, n, tol, max_iter)
    return METHOD_RANK[own[1]] if own else METHOD_RANK["uniform"]


def build_weights(counts: Sequence[StratumCount], history: Mapping[int, Sequence[StratumCount]] | None = None,
                  tol: float = 1e-8, max_iter: int = 1000) -> list[WeightRecord]:
    """Weights for one area-year domain through the fallback hierarchy.

    Order: cell weights, 2-D raking, 1-D calibration, temporal donor,
    uniform. ``history`` maps other years of the same area to their counts.
    Returns an empty list when nothing was sampled (domain missing).
    """
    counts = list(counts)
    if not counts:
        return []
    d, y = counts[0].d, counts[0].y
    N, n = _tables(counts)
    if N.sum() <= 0:
        raise DomainError(f"domain {d}/{y} has no population")
    if n.sum() == 0:
        return []
    own = _own_method(N, n, tol, max_iter)
    donor_year = None
    if own is not None:
        w, method = own
    else:
        w, method, donor_year = _donor(N, n, y, history or {}, tol, max_iter)
    out = []
    for i, s in enumerate(SIZES):
        for j, t in enumerate(SPECS):
            if n[i, j] > 0:
                out.append(WeightRecord(d, s, t, y, float(w[i, j]), method, donor_year))
    return out


def _donor(N, n, y, history, tol, max_iter):
    candidates = []
    for year, rows in history.items():
        if year == y:
            continue
        Nd, nd = _tables(rows)
        if Nd.sum() <= 0:
            continue
        p = Nd / Nd.sum()
        if np.any((n > 0) & (p <= 0)):
            continue
        # distance, then quality, then the most recent year
        candidates.append(((abs(year - y), _quality(Nd, nd, tol, max_iter), -year), year, p))
    if candidates:
        _, year, p = min(candidates, key=lambda c: c[0])
        Ntilde = p * N.sum()
        w = np.full(n.shape, np.nan)
        w[n > 0] = Ntilde[n > 0] / n[n > 0]
        return w, "donor", year
    w = np.where(n > 0, N.sum() / n.sum(), np.nan)
    return w, "uniform", None


@dataclass
class DomainEstimate:
    d: str
    y: int
    variable: str
    total: float
    mean: float
    var_total: float = math.nan
    var_mean: float = math.nan
    n_dy: int = 0
    N_dy: float = math.nan
    low_support: bool = False


def ht_estimate(weights: Sequence[WeightRecord], values: Iterable[tuple[tuple[str, str], float]],
                N_dy: float, variable: str = "x") -> DomainEstimate:
    """Horvitz-Thompson total and mean of one domain.

    ``values`` holds ``((size, spec), x)`` pairs, one per sampled farm.
    """
    wmap = {(w.s, w.t): w.weight for w in weights}
    if not weights:
        raise UnweightedObservationError("no weights for domain")
    d, y = weights[0].d, weights[0].y
    terms = []
    n = 0
    for stratum, x in values:
        if stratum not in wmap:
            raise UnweightedObservationError(f"stratum {stratum} has no weight in {d}/{y}")
        terms.append(wmap[stratum] * float(x))
        n += 1
    total = math.fsum(terms)
    return DomainEstimate(d, y, variable, total, total / N_dy, n_dy=n, N_dy=float(N_dy))


def design_variance(strata: Sequence[tuple[float, Sequence[float]]], N_dy: float | None = None):
    """Stratified variance of the HT total with finite-population correction.

    ``strata`` is a sequence of ``(N_h, sample values)``. Strata sampled once
    contribute zero and set the returned low-support flag.

    Returns ``(var_total, var_mean, low_support)``.
    """
    var_total = 0.0
    low_support = False
    pop = 0.0
    for N_h, xs in strata:
        xs = np.asarray(xs, dtype=float)
        pop += N_h
        n_h = len(xs)
        if n_h == 0:
            continue
        if n_h == 1:
            low_support = True
            continue
        if n_h >= N_h:
            continue
        s2 = float(np.var(xs, ddof=1))
        var_total += N_h ** 2 * (1.0 - n_h / N_h) * s2 / n_h
    N_dy = pop if N_dy is None else N_dy
    var_mean = var_total / N_dy ** 2 if N_dy > 0 else math.nan
    return var_total, var_mean, low_support


@dataclass
class SurveyDomain:
    """Counts and farm records for one area-year domain."""

    d: str
    y: int
    N: np.ndarray
    farms: list = field(default_factory=list)  # (size, spec, {variable: value})

    @property
    def n(self) -> np.ndarray:
        n = np.zeros((2, 3))
        for s, t, _ in self.farms:
            n[SIZES.index(s), SPECS.index(t)] += 1
        return n

    def stratum_counts(self) -> list[StratumCount]:
        n = self.n
        return [StratumCount(self.d, s, t, self.y, float(self.N[i, j]), int(n[i, j]))
                for i, s in enumerate(SIZES) for j, t in enumerate(SPECS)]


def estimate_domains(domains: Sequence[SurveyDomain], variables: Sequence[str],
                     tol: float = 1e-8, max_iter: int = 1000):
    """Weights and direct estimates for every domain and variable.

    Returns ``(weight_records, estimates)``; unsampled domains produce an
    estimate with NaN total/mean and ``n_dy = 0``.
    """
    by_area: dict[str, dict[int, SurveyDomain]] = {}
    for dom in domains:
        by_area.setdefault(dom.d, {})[dom.y] = dom
    weights_out: list[WeightRecord] = []
    estimates: list[DomainEstimate] = []
    for d in sorted(by_area):
        years = by_area[d]
        history = {yy: dom.stratum_counts() for yy, dom in years.items()}
        for y in sorted(years):
            dom = years[y]
            N_dy = float(dom.N.sum())
            if N_dy <= 0:
                continue
            w = build_weights(history[y], {k: v for k, v in history.items() if k != y}, tol, max_iter)
            weights_out.extend(w)
            for var in variables:
                if not w:
                    estimates.append(DomainEstimate(d, y, var, math.nan, math.nan, n_dy=0, N_dy=N_dy))
                    continue
                vals = [((s, t), rec[var]) for s, t, rec in dom.farms]
                est = ht_estimate(w, vals, N_dy, var)
                strata = []
                for i, s in enumerate(SIZES):
                    for j, t in enumerate(SPECS):
                        xs = [rec[var] for ss, tt, rec in dom.farms if (ss, tt) == (s, t)]
                        strata.append((float(dom.N[i, j]), xs))
                vt, vm, low = design_variance(strata, N_dy)
                est.var_total, est.var_mean, est.low_support = vt, vm, low
                estimates.append(est)
    return weights_out, estimates
