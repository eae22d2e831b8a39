"""
Area x year panel assembly, missing-value accounting and the plausibility
checks run on the finished panel.
"""

from __future__ import annotations

import fnmatch
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import CollisionError

PANEL_YEARS = (2011, 2024)


def is_missing(v) -> bool:
    return v is None or (isinstance(v, float) and math.isnan(v))


@dataclass(frozen=True)
class PanelCell:
    area_id: str
    year: int
    variable: str
    value: float | None
    provenance: str


@dataclass(frozen=True)
class Fragment:
    """Long-format rows ``(area_id, year, variable, value)`` from one source."""

    source: str
    rows: tuple

    @classmethod
    def of(cls, source: str, rows: Iterable[tuple]) -> "Fragment":
        return cls(source, tuple((str(a), int(y), str(v), None if is_missing(x) else float(x))
                                 for a, y, v, x in rows))


@dataclass
class Panel:
    areas: list[str]
    years: list[int]
    columns: list[tuple[str, str]]              # (source, variable), sorted
    cells: dict = field(default_factory=dict)   # (area, year, variable) -> PanelCell

    @property
    def variables(self) -> list[str]:
        return [v for _, v in self.columns]

    def source_of(self, variable: str) -> str:
        for s, v in self.columns:
            if v == variable:
                return s
        raise KeyError(variable)

    def value(self, area: str, year: int, variable: str):
        cell = self.cells.get((area, year, variable))
        return None if cell is None else cell.value

    def long_rows(self) -> list[tuple]:
        """Every (area, year, column) combination, missing values included."""
        out = []
        for a in self.areas:
            for y in self.years:
                for s, v in self.columns:
                    out.append((a, y, v, self.value(a, y, v), s))
        return out

    def wide_rows(self) -> tuple[list[str], list[list]]:
        header = ["area_id", "year"] + [v for _, v in self.columns]
        rows = [[a, y] + [self.value(a, y, v) for _, v in self.columns]
                for a in self.areas for y in self.years]
        return header, rows

    def to_fragments(self) -> list[Fragment]:
        by_src: dict[str, list] = defaultdict(list)
        for a, y, v, x, s in self.long_rows():
            by_src[s].append((a, y, v, x))
        return [Fragment.of(s, rows) for s, rows in sorted(by_src.items())]

    def column(self, variable: str) -> dict:
        return {(a, y): self.value(a, y, variable) for a in self.areas for y in self.years}

    def fingerprint(self) -> tuple:
        return tuple(self.long_rows())

    def __eq__(self, other):
        return (isinstance(other, Panel) and self.areas == other.areas and self.years == other.years
                and self.columns == other.columns and self.fingerprint() == other.fingerprint())


def assemble(fragments: Sequence[Fragment], areas: Sequence[str] | None = None,
             years: Sequence[int] | None = None) -> Panel:
    """Full outer join of fragments on (area, year).

    Without explicit ``areas``/``years`` the union over fragments is used.
    A variable may come from one source only; repeated keys raise
    CollisionError naming both sources.
    """
    owner: dict[tuple, str] = {}
    var_source: dict[str, str] = {}
    cells = {}
    seen_areas, seen_years = set(), set()
    for frag in fragments:
        for a, y, v, x in frag.rows:
            key = (a, y, v)
            if key in owner:
                raise CollisionError(f"{key} supplied by both {owner[key]!r} and {frag.source!r}")
            if v in var_source and var_source[v] != frag.source:
                raise CollisionError(f"variable {v!r} supplied by both {var_source[v]!r} and {frag.source!r}")
            owner[key] = frag.source
            var_source[v] = frag.source
            seen_areas.add(a)
            seen_years.add(y)
            cells[key] = PanelCell(a, y, v, x, frag.source)
    area_list = sorted(set(areas) if areas is not None else seen_areas)
    year_list = sorted(set(int(y) for y in years) if years is not None else seen_years)
    columns = sorted((s, v) for v, s in var_source.items())
    keep = {k: c for k, c in cells.items() if k[0] in set(area_list) and k[1] in set(year_list)}
    return Panel(area_list, year_list, columns, keep)


def missing_report(panel: Panel) -> list[dict]:
    """Coverage and missing counts per (source, variable, year)."""
    out = []
    for s, v in panel.columns:
        for y in panel.years:
            present = sum(1 for a in panel.areas if not is_missing(panel.value(a, y, v)))
            out.append({"source": s, "variable": v, "year": y,
                        "covered": present, "missing": len(panel.areas) - present})
    return out


@dataclass(frozen=True)
class Violation:
    rule: str
    area_id: str | None
    year: int | None
    variable: str
    value: float | None
    message: str


class Rule:
    name = "rule"

    def check(self, panel: Panel) -> list[Violation]:
        raise NotImplementedError


def _matching(panel: Panel, patterns: Sequence[str]) -> list[str]:
    return [v for v in panel.variables if any(fnmatch.fnmatchcase(v, p) for p in patterns)]


@dataclass
class BoundedRule(Rule):
    patterns: tuple
    lower: float
    upper: float
    lower_open: bool = True
    name: str = "bounded"

    def check(self, panel):
        out = []
        for v in _matching(panel, self.patterns):
            for (a, y), x in panel.column(v).items():
                if is_missing(x):
                    continue
                low_ok = x > self.lower if self.lower_open else x >= self.lower
                if not (low_ok and x <= self.upper):
                    lb = "(" if self.lower_open else "["
                    out.append(Violation(self.name, a, y, v, x,
                                         f"{v}={x} outside {lb}{self.lower}, {self.upper}]"))
        return out


@dataclass
class NonNegativeRule(Rule):
    patterns: tuple
    name: str = "non_negative"

    def check(self, panel):
        return [Violation(self.name, a, y, v, x, f"{v}={x} is negative")
                for v in _matching(panel, self.patterns)
                for (a, y), x in panel.column(v).items()
                if not is_missing(x) and x < 0]


@dataclass
class ShareSumRule(Rule):
    patterns: tuple
    target: float = 100.0
    tol: float = 1e-6
    name: str = "share_sum"

    def check(self, panel):
        cols = _matching(panel, self.patterns)
        if not cols:
            return []
        out = []
        label = "|".join(self.patterns)
        for a in panel.areas:
            for y in panel.years:
                vals = [panel.value(a, y, v) for v in cols]
                if all(is_missing(x) for x in vals):
                    continue
                total = math.fsum(0.0 if is_missing(x) else x for x in vals)
                if abs(total - self.target) > self.tol:
                    out.append(Violation(self.name, a, y, label, total,
                                         f"shares {label} sum to {total}, not {self.target}"))
        return out


@dataclass
class SeasonalOrderRule(Rule):
    warm: str = "t2m_summer_mean"
    cold: str = "t2m_winter_mean"
    name: str = "seasonal_order"

    def check(self, panel):
        if self.warm not in panel.variables or self.cold not in panel.variables:
            return []
        out = []
        for a in panel.areas:
            for y in panel.years:
                w, c = panel.value(a, y, self.warm), panel.value(a, y, self.cold)
                if is_missing(w) or is_missing(c):
                    continue
                if w < c:
                    out.append(Violation(self.name, a, y, self.warm, w,
                                         f"{self.warm}={w} below {self.cold}={c}"))
        return out


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xc, yc = x - x.mean(), y - y.mean()
    den = math.sqrt(float(xc @ xc) * float(yc @ yc))
    if den == 0:
        return 1.0 if np.allclose(x, y) else math.nan
    return float(xc @ yc) / den


@dataclass
class FidelityRule(Rule):
    """Correlation between kriged values at source cells and the sources.

    ``pairs`` maps a variable label to ``(kriged, observed)`` vectors; the
    panel itself is not consulted.
    """

    pairs: Mapping[str, tuple] = field(default_factory=dict)
    threshold: float = 0.9
    name: str = "interpolation_fidelity"

    def check(self, panel):
        out = []
        for label, (kriged, observed) in sorted(self.pairs.items()):
            r = pearson(kriged, observed)
            if not (r >= self.threshold):
                out.append(Violation(self.name, None, None, label, r,
                                     f"Pearson r={r:.4f} below {self.threshold}"))
        return out


def default_rules(share_tol: float = 1e-6, fidelity: Mapping | None = None,
                  fidelity_threshold: float = 0.9) -> list[Rule]:
    rules: list[Rule] = [
        BoundedRule(("rh", "rh_*"), 0.0, 100.0),
        NonNegativeRule(tuple(p for b in ("tp", "sf", "ro", "sro", "ssro") for p in (b, f"{b}_*"))),
        ShareSumRule(("lc_clc_*",), tol=share_tol, name="share_sum_clc"),
        ShareSumRule(("lc_gdlc_*",), tol=share_tol, name="share_sum_gdlc"),
        ShareSumRule(("elev_share_*",), tol=share_tol, name="share_sum_elevation"),
        SeasonalOrderRule(),
    ]
    if fidelity:
        rules.append(FidelityRule(dict(fidelity), fidelity_threshold))
    return rules


def validate(panel: Panel, rules: Sequence[Rule] | None = None) -> list[Violation]:
    """Evaluate every rule; the panel is never modified."""
    rules = default_rules() if rules is None else rules
    out = []
    for rule in rules:
        out.extend(rule.check(panel))
    return out
