"""
Delimited-table and JSON helpers with a stable text representation.

Floats are written with ``repr`` (shortest round-trip form) so identical
numbers always produce identical bytes; missing values are written as
``NA``.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import MissingInputError, TableFormatError

MISSING = "NA"


def format_value(v) -> str:
    if v is None:
        return MISSING
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return MISSING
        if v == 0.0:
            return "0.0"  # fold -0.0 so sign noise cannot change bytes
        return repr(v)
    return str(v)


def parse_float(s: str | None) -> float:
    if s is None:
        return math.nan
    s = s.strip()
    if s in ("", MISSING, "nan", "NaN"):
        return math.nan
    try:
        return float(s)
    except ValueError as exc:
        raise TableFormatError(f"not a number: {s!r}") from exc


def write_table(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_value(v) for v in row])
    return path


def write_records(path: str | Path, records: Sequence[Mapping], header: Sequence[str] | None = None) -> Path:
    if header is None:
        header = list(records[0].keys()) if records else []
    return write_table(path, header, ([r.get(h) for h in header] for r in records))


def require(path: str | Path) -> Path:
    path = Path(path)
    if not path.is_file():
        raise MissingInputError(f"input file not found: {path}")
    return path


def read_table(path: str | Path, required: Sequence[str] = ()) -> list[dict]:
    """Rows as dicts of strings; checks that ``required`` columns exist."""
    path = require(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in required if c not in (reader.fieldnames or [])]
        if missing:
            raise TableFormatError(f"{path.name}: missing columns {missing}")
        return list(reader)


def to_jsonable(obj):
    """Plain JSON types; NaN/inf become None, numpy scalars become Python."""
    if isinstance(obj, Mapping):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dumps(obj) -> str:
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path: str | Path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj), encoding="utf-8")
    return path


def read_json(path: str | Path):
    return json.loads(require(path).read_text(encoding="utf-8"))


def sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
