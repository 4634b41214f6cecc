"""CSV (17 significant digits) and JSON persistence."""
from __future__ import annotations

import csv
import dataclasses
import json
import math
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def write_csv(path: str | Path, columns: Mapping[str, Sequence]) -> Path:
    path = Path(path)
    names = list(columns)
    cols = [list(np.asarray(columns[k], dtype=object).ravel()) if not isinstance(columns[k], list)
            else columns[k] for k in names]
    n = {len(c) for c in cols}
    if len(n) > 1:
        raise ValueError(f"columns have unequal lengths {sorted(n)}")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in zip(*cols):
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv(path: str | Path) -> dict[str, np.ndarray]:
    """Columns as float arrays where every entry parses, else as string arrays."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    head, body = rows[0], rows[1:]
    out = {}
    for j, name in enumerate(head):
        vals = [r[j] for r in body]
        try:
            out[name] = np.array([float(v) if v != "" else math.nan for v in vals])
        except ValueError:
            out[name] = np.array(vals, dtype=object)
    return out


def _default(o):
    if dataclasses.is_dataclass(o) and not isinstance(o, type):
        return dataclasses.asdict(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, Path):
        return str(o)
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(f"cannot serialise {type(o).__name__}")


def _clean(o):
    # JSON has no NaN/inf; store them as null
    if isinstance(o, float) and not math.isfinite(o):
        return None
    if isinstance(o, dict):
        return {k: _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    return o


def write_json(path: str | Path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(_clean(json.loads(json.dumps(obj, default=_default, allow_nan=True))),
                      indent=2, sort_keys=True, allow_nan=False)
    path.write_text(text + "\n")
    return path


def read_json(path: str | Path):
    return json.loads(Path(path).read_text())
