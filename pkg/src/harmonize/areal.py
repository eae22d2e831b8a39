"""
Non-geostatistical harmonization: municipal crosswalk aggregation, land
cover reclassification and shares, elevation bands and snapshot schedules.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import CoverageOverflowError, ScheduleGapError, UnmappedClassError, UnmappedUnitError
from .geomcore import AreaUnit, Crosswalk, assign_points_to_areas

HARMONIZED_CLASSES = ("Urban", "Arable-Land", "PermCrops", "Pastures", "HetAgro",
                      "Forests", "GrassScrubOpenSpaceLilVeg", "Wetlands", "Water")

CLC_RECLASS = {
    **dict.fromkeys((111, 112, 121, 122, 123, 124, 131, 132, 133, 141, 142), "Urban"),
    **dict.fromkeys((211, 212, 213), "Arable-Land"),
    **dict.fromkeys((221, 222), "PermCrops"),
    **dict.fromkeys((223, 231), "Pastures"),
    **dict.fromkeys((241, 242, 243, 244), "HetAgro"),
    **dict.fromkeys((311, 312, 313), "Forests"),
    **dict.fromkeys((321, 322, 323, 324, 331, 332, 333, 334, 335), "GrassScrubOpenSpaceLilVeg"),
    **dict.fromkeys((411, 412, 421, 422, 423), "Wetlands"),
    **dict.fromkeys((511, 512, 521, 522, 523), "Water"),
}

PLAIN_MAX = 200.0
HILL_MAX = 600.0
SHARE_TOL = 1e-6


def _missing(v) -> bool:
    return v is None or (isinstance(v, float) and math.isnan(v))


def aggregate_crosswalk(values: Mapping[str, float] | Iterable[tuple[str, float]],
                        xwalk: Crosswalk, method: str = "sum") -> dict[str, float]:
    """Sum or unweighted mean of municipal values per area.

    ``values`` may be a mapping or an iterable of ``(municipality, value)``
    records (repeated ids are all counted). Areas in the crosswalk without a
    single non-missing contribution come back as NaN.
    """
    if method not in ("sum", "mean"):
        raise ValueError("method must be 'sum' or 'mean'")
    records = list(values.items()) if isinstance(values, Mapping) else list(values)
    unmapped = {m for m, _ in records if m not in xwalk}
    if unmapped:
        raise UnmappedUnitError(unmapped)
    acc: dict[str, list[float]] = {a: [] for a in sorted(set(xwalk.entries.values()))}
    for muni, v in records:
        if not _missing(v):
            acc[xwalk[muni]].append(float(v))
    out = {}
    for area, vals in acc.items():
        if not vals:
            out[area] = math.nan
        elif method == "sum":
            out[area] = math.fsum(vals)
        else:
            out[area] = math.fsum(vals) / len(vals)
    return out


@dataclass(frozen=True)
class ReclassTable:
    entries: Mapping

    def __post_init__(self):
        object.__setattr__(self, "entries", dict(self.entries))

    @classmethod
    def identity(cls, codes) -> "ReclassTable":
        return cls({c: c for c in codes})

    def check_complete(self, codes) -> None:
        missing = set(codes) - set(self.entries)
        if missing:
            raise UnmappedClassError(missing)


CLC_TABLE = ReclassTable(CLC_RECLASS)


def reclassify(map_cells: Sequence[tuple[object, object]], table: ReclassTable) -> list[tuple[object, object]]:
    table.check_complete({code for _, code in map_cells})
    return [(cell, table.entries[code]) for cell, code in map_cells]


def area_shares(class_cells: Mapping[str, float], cell_area: float, area_total: float) -> dict[str, float]:
    """Percent of ``area_total`` covered by each class."""
    if not (cell_area > 0 and area_total > 0):
        raise ValueError("cell_area and area_total must be positive")
    covered = sum(class_cells.values()) * cell_area
    if covered > area_total * (1 + 1e-6):
        raise CoverageOverflowError(f"classified area {covered} exceeds area total {area_total}")
    return {code: 100.0 * count * cell_area / area_total for code, count in class_cells.items()}


def elevation_band_shares(dem_values, thresholds: tuple[float, float] = (PLAIN_MAX, HILL_MAX)):
    """(plain, hill, mountain) percentages; 200 counts as plain, 600 as hill."""
    z = np.asarray(dem_values, dtype=float).ravel()
    z = z[~np.isnan(z)]
    if len(z) == 0:
        raise ValueError("no elevation values")
    lo, hi = thresholds
    plain = int(np.count_nonzero(z <= lo))
    hill = int(np.count_nonzero((z > lo) & (z <= hi)))
    mountain = len(z) - plain - hill
    n = len(z)
    shares = [100.0 * plain / n, 100.0 * hill / n]
    # close the budget on the last band so the triple sums to 100
    shares.append(100.0 - shares[0] - shares[1] if mountain else 0.0)
    return tuple(shares)


@dataclass(frozen=True)
class SnapshotSchedule:
    """Mapping snapshot year -> inclusive (first, last) target-year range."""

    snapshots: Mapping[int, tuple[int, int]]

    def __post_init__(self):
        spans = sorted((int(a), int(b), int(y)) for y, (a, b) in self.snapshots.items())
        for (a1, b1, y1), (a2, b2, y2) in zip(spans, spans[1:]):
            if a2 <= b1:
                raise ValueError(f"snapshot ranges overlap: {y1} and {y2}")
        object.__setattr__(self, "snapshots", {int(y): (int(a), int(b)) for y, (a, b) in self.snapshots.items()})

    def span(self) -> tuple[int, int]:
        return (min(a for a, _ in self.snapshots.values()),
                max(b for _, b in self.snapshots.values()))


CLC_SCHEDULE = SnapshotSchedule({2012: (2011, 2017), 2018: (2018, 2024)})
GDLC_SCHEDULE = SnapshotSchedule({2015: (2011, 2015), 2016: (2016, 2016), 2017: (2017, 2017),
                                  2018: (2018, 2018), 2019: (2019, 2024)})


def expand_piecewise(schedule: SnapshotSchedule, target_year: int) -> int:
    for snap, (first, last) in schedule.snapshots.items():
        if first <= target_year <= last:
            return snap
    raise ScheduleGapError(f"no snapshot covers year {target_year}")


def raster_area_shares(cells_xy, classes, areas: Sequence[AreaUnit], cell_area: float,
                       table: ReclassTable | None = None, class_order: Sequence | None = None) -> dict:
    """Assign raster cells to areas by cell centre and compute class shares.

    Returns ``{area_id: {class: percent}}``; every class in ``class_order``
    (or observed) is reported, zeros included.
    """
    classes = list(classes)
    if table is not None:
        table.check_complete(set(classes))
        classes = [table.entries[c] for c in classes]
    owner = assign_points_to_areas(cells_xy, areas)
    order = list(class_order) if class_order is not None else sorted(set(classes), key=str)
    counts = {a.id: dict.fromkeys(order, 0) for a in areas}
    for i, c in zip(owner, classes):
        if i >= 0:
            counts[areas[i].id][c] = counts[areas[i].id].get(c, 0) + 1
    return {a.id: area_shares(counts[a.id], cell_area, a.area) for a in areas}


def raster_elevation_shares(cells_xy, elevations, areas: Sequence[AreaUnit]) -> dict:
    owner = assign_points_to_areas(cells_xy, areas)
    z = np.asarray(elevations, dtype=float)
    out = {}
    for i, a in enumerate(areas):
        sel = z[owner == i]
        out[a.id] = elevation_band_shares(sel) if len(sel) else (math.nan,) * 3
    return out
