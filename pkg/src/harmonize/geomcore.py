"""
Planar spatial primitives: points, polygonal areas, gridded field snapshots,
block discretization, nearest-neighbour search and the municipality to area
crosswalk.

All geometry is Euclidean in whatever unit the inputs carry (degrees or
projected metres); no CRS handling is attempted.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .errors import CrosswalkError, EmptyInputError, InvalidGeometryError

MAX_HALVINGS = 10
MIN_BLOCK_POINTS = 4


class Point(NamedTuple):
    x: float
    y: float


Ring = tuple[Point, ...]


def _as_ring(points: Iterable[Sequence[float]]) -> Ring:
    ring = tuple(Point(float(p[0]), float(p[1])) for p in points)
    if not ring:
        raise InvalidGeometryError("empty ring")
    if ring[0] != ring[-1]:
        ring = ring + (ring[0],)
    if any(not (math.isfinite(p.x) and math.isfinite(p.y)) for p in ring):
        raise InvalidGeometryError("non-finite ring coordinate")
    if len(set(ring)) < 3:
        raise InvalidGeometryError("ring has fewer than 3 distinct points")
    return ring


def ring_signed_area(ring: Sequence[Point]) -> float:
    xy = np.asarray(ring, dtype=float)
    x, y = xy[:, 0], xy[:, 1]
    # Translate to the first vertex so large offsets do not cancel badly.
    x = x - x[0]
    y = y - y[0]
    return 0.5 * float(np.dot(x[:-1], y[1:]) - np.dot(x[1:], y[:-1]))


@dataclass(frozen=True)
class AreaUnit:
    """A reporting area made of one or more polygons.

    ``parts`` holds one entry per polygon, each a tuple whose first ring is
    the outer boundary and the remaining rings are holes. Rings are closed
    on construction.
    """

    id: str
    parts: tuple[tuple[Ring, ...], ...]
    area: float = field(init=False)

    def __post_init__(self):
        if not self.parts:
            raise InvalidGeometryError(f"area {self.id!r} has no polygons")
        parts = tuple(tuple(_as_ring(r) for r in part) for part in self.parts)
        if any(len(p) == 0 for p in parts):
            raise InvalidGeometryError(f"area {self.id!r} has a polygon without rings")
        object.__setattr__(self, "parts", parts)
        total = 0.0
        for part in parts:
            total += abs(ring_signed_area(part[0]))
            total -= sum(abs(ring_signed_area(h)) for h in part[1:])
        if not total > 0.0:
            raise InvalidGeometryError(f"area {self.id!r} has non-positive area {total}")
        object.__setattr__(self, "area", total)

    @classmethod
    def from_rings(cls, id: str, rings: Sequence[Sequence[Sequence[float]]]) -> "AreaUnit":
        """Single polygon: outer ring first, holes after."""
        return cls(str(id), (tuple(rings),))

    @classmethod
    def polygon(cls, id: str, outer, *holes) -> "AreaUnit":
        return cls(str(id), ((outer, *holes),))

    @classmethod
    def rectangle(cls, id: str, x0: float, y0: float, x1: float, y1: float) -> "AreaUnit":
        return cls.polygon(id, [(x0, y0), (x1, y0), (x1, y1), (x0, y1)])

    @property
    def rings(self) -> list[Ring]:
        return [r for part in self.parts for r in part]

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        xy = np.concatenate([np.asarray(part[0]) for part in self.parts])
        return (float(xy[:, 0].min()), float(xy[:, 1].min()),
                float(xy[:, 0].max()), float(xy[:, 1].max()))

    def contains(self, x, y) -> np.ndarray:
        return points_in_area(self, np.column_stack([np.atleast_1d(x), np.atleast_1d(y)]))


def polygon_area(area_unit: AreaUnit) -> float:
    """Shoelace area of the outer rings minus the holes."""
    return area_unit.area


def _on_segment(px, py, x1, y1, x2, y2, eps):
    cross = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
    scale = max(abs(x2 - x1), abs(y2 - y1), 1.0)
    within = ((px >= np.minimum(x1, x2) - eps) & (px <= np.maximum(x1, x2) + eps)
              & (py >= np.minimum(y1, y2) - eps) & (py <= np.maximum(y1, y2) + eps))
    return within & (np.abs(cross) <= eps * scale)


def points_in_area(area_unit: AreaUnit, xy: np.ndarray, eps: float = 1e-12) -> np.ndarray:
    """Even-odd ray casting over all rings; boundary points count as inside."""
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    px, py = xy[:, 0], xy[:, 1]
    inside = np.zeros(len(xy), dtype=bool)
    boundary = np.zeros(len(xy), dtype=bool)
    for ring in area_unit.rings:
        r = np.asarray(ring, dtype=float)
        for (x1, y1), (x2, y2) in zip(r[:-1], r[1:]):
            boundary |= _on_segment(px, py, x1, y1, x2, y2, eps)
            straddles = (y1 > py) != (y2 > py)
            if not straddles.any():
                continue
            with np.errstate(divide="ignore", invalid="ignore"):
                x_cross = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
            inside ^= straddles & (px < x_cross)
    return inside | boundary


def point_in_area(area_unit: AreaUnit, point: Sequence[float]) -> bool:
    return bool(points_in_area(area_unit, np.asarray([point], dtype=float))[0])


def discretize_block(area_unit: AreaUnit, spacing: float) -> list[Point]:
    """Cell-centre lattice inside the polygon.

    The lattice starts ``spacing / 2`` from the lower-left bounding-box
    corner. If fewer than 4 lattice points fall inside, the spacing is
    halved (at most 10 times).
    """
    if not spacing > 0:
        raise ValueError("spacing must be positive")
    if not area_unit.area > 0:
        raise InvalidGeometryError("zero-area polygon")
    xmin, ymin, xmax, ymax = area_unit.bounds
    pts = np.empty((0, 2))
    for _ in range(MAX_HALVINGS + 1):
        xs = np.arange(xmin + spacing / 2, xmax + 1e-12 * max(1.0, abs(xmax)), spacing)
        ys = np.arange(ymin + spacing / 2, ymax + 1e-12 * max(1.0, abs(ymax)), spacing)
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        cand = np.column_stack([gx.ravel(), gy.ravel()])
        pts = cand[points_in_area(area_unit, cand)] if len(cand) else cand
        if len(pts) >= MIN_BLOCK_POINTS:
            break
        spacing /= 2.0
    if len(pts) == 0:
        raise InvalidGeometryError(f"no lattice point inside area {area_unit.id!r}")
    return [Point(float(x), float(y)) for x, y in pts]


def knn(samples: Sequence[Sequence[float]], target: Sequence[float], k: int) -> list[int]:
    """Indices of the ``min(k, n)`` nearest samples; ties go to the lower index."""
    if k < 1:
        raise ValueError("k must be >= 1")
    xy = np.asarray(samples, dtype=float).reshape(-1, 2)
    if len(xy) == 0:
        raise EmptyInputError("no samples to search")
    d2 = (xy[:, 0] - target[0]) ** 2 + (xy[:, 1] - target[1]) ** 2
    order = np.argsort(d2, kind="stable")
    return [int(i) for i in order[: min(k, len(xy))]]


@dataclass(frozen=True)
class GridFieldSnapshot:
    """One (variable, year, sector) field observed at sample locations."""

    variable: str
    year: int
    coords: np.ndarray
    values: np.ndarray
    sector: str | None = None

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float).reshape(-1, 2)
        values = np.asarray(self.values, dtype=float).ravel()
        if len(values) == 0:
            raise EmptyInputError(f"field {self.variable}/{self.year} has no samples")
        if len(values) != len(coords):
            raise ValueError("coords and values differ in length")
        if not (np.isfinite(values).all() and np.isfinite(coords).all()):
            raise ValueError("field contains non-finite coordinates or values")
        coords.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_samples(cls, variable, year, samples, sector=None):
        samples = list(samples)
        coords = [(p[0], p[1]) for p, _ in samples]
        values = [v for _, v in samples]
        return cls(variable, int(year), np.asarray(coords, dtype=float), np.asarray(values), sector)

    @property
    def samples(self) -> list[tuple[Point, float]]:
        return [(Point(*c), float(v)) for c, v in zip(self.coords, self.values)]

    def __len__(self):
        return len(self.values)

    def subset(self, idx) -> "GridFieldSnapshot":
        return GridFieldSnapshot(self.variable, self.year, self.coords[idx], self.values[idx], self.sector)

    def deduplicated(self) -> "GridFieldSnapshot":
        """Average the values of coincident sample locations."""
        uniq, inverse = np.unique(self.coords, axis=0, return_inverse=True)
        if len(uniq) == len(self.coords):
            return self
        inverse = inverse.ravel()
        sums = np.bincount(inverse, weights=self.values, minlength=len(uniq))
        counts = np.bincount(inverse, minlength=len(uniq))
        # keep first-occurrence order for reproducible neighbour tie-breaks
        first = np.full(len(uniq), len(inverse))
        np.minimum.at(first, inverse, np.arange(len(inverse)))
        order = np.argsort(first, kind="stable")
        return GridFieldSnapshot(self.variable, self.year, uniq[order],
                                 (sums / counts)[order], self.sector)


@dataclass(frozen=True)
class Crosswalk:
    entries: Mapping[str, str]

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, str]]) -> "Crosswalk":
        entries: dict[str, str] = {}
        conflicts = []
        for muni, area in pairs:
            muni, area = str(muni), str(area)
            if muni in entries and entries[muni] != area:
                conflicts.append(f"{muni} -> {entries[muni]} / {area}")
            entries[muni] = area
        if conflicts:
            raise CrosswalkError("municipality mapped to several areas: " + "; ".join(conflicts))
        return cls(dict(entries))

    def __getitem__(self, muni: str) -> str:
        return self.entries[muni]

    def __contains__(self, muni) -> bool:
        return muni in self.entries

    def members(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {}
        for muni, area in sorted(self.entries.items()):
            out.setdefault(area, []).append(muni)
        return out


def read_crosswalk(path: str | Path) -> Crosswalk:
    """Two-column delimited file ``municipality_id, area_id`` with a header."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader, None)
        return Crosswalk.from_pairs((row[0].strip(), row[1].strip()) for row in reader if row)


def _geometry_parts(geom: Mapping) -> list[list[list[Sequence[float]]]]:
    if geom["type"] == "Polygon":
        return [geom["coordinates"]]
    if geom["type"] == "MultiPolygon":
        return list(geom["coordinates"])
    raise InvalidGeometryError(f"unsupported geometry type {geom['type']}")


def read_areas_geojson(path: str | Path, id_field: str = "id") -> list[AreaUnit]:
    with open(path) as fh:
        doc = json.load(fh)
    features = doc["features"] if doc.get("type") == "FeatureCollection" else [doc]
    areas = []
    seen = set()
    for feat in features:
        props = feat.get("properties") or {}
        area_id = str(props.get(id_field, feat.get("id")))
        if area_id in seen:
            raise InvalidGeometryError(f"duplicate area id {area_id!r}")
        seen.add(area_id)
        parts = tuple(tuple(ring) for ring in _geometry_parts(feat["geometry"]))
        areas.append(AreaUnit(area_id, parts))
    return areas


def areas_to_geojson(areas: Iterable[AreaUnit]) -> dict:
    features = []
    for a in areas:
        coords = [[[list(p) for p in ring] for ring in part] for part in a.parts]
        geom = ({"type": "Polygon", "coordinates": coords[0]} if len(coords) == 1
                else {"type": "MultiPolygon", "coordinates": coords})
        features.append({"type": "Feature", "properties": {"id": a.id}, "geometry": geom})
    return {"type": "FeatureCollection", "features": features}


def assign_points_to_areas(xy: np.ndarray, areas: Sequence[AreaUnit]) -> np.ndarray:
    """Index of the first area containing each point (-1 when none does)."""
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    out = np.full(len(xy), -1, dtype=int)
    for i, a in enumerate(areas):
        xmin, ymin, xmax, ymax = a.bounds
        cand = np.flatnonzero((out < 0) & (xy[:, 0] >= xmin) & (xy[:, 0] <= xmax)
                              & (xy[:, 1] >= ymin) & (xy[:, 1] <= ymax))
        if len(cand):
            hit = points_in_area(a, xy[cand])
            out[cand[hit]] = i
    return out
