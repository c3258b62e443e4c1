"""Deterministic artifact writers.

Every emitted file carries the configuration hash and the package
version.  Nothing time- or host-dependent goes into the files, so a
fixed config and seed reproduce them byte for byte.  CSV uses ``#
key=value`` comment lines before the column header; JSON nests the same
mapping under ``"_meta"``; SVG carries it in a leading XML comment.

Forward solves are cached as ``cache/forward-<hash16>.npz`` inside the
output directory; the stored hash is checked on load so a stale cache
is never silently reused.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .pde_solver import Grid2D, SpaceTimeField


def make_meta(cfg_hash: str, subcommand: str, **extra) -> dict:
    meta = {"config_hash": cfg_hash, "version": __version__,
            "subcommand": subcommand}
    for key in sorted(extra):
        meta[key] = extra[key]
    return meta


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_csv(path, meta: dict, columns, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# {key}={_fmt(val)}" for key, val in meta.items()]
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def jsonable(value):
    if isinstance(value, dict):
        return {k: jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if np.isnan(v):
            return "nan"
        if np.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(value, np.ndarray):
        return [jsonable(v) for v in value.tolist()]
    return value


def write_json(path, meta: dict, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = dict(jsonable(payload))
    doc["_meta"] = jsonable(meta)
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    return path


def write_svg(path, meta: dict, svg_text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    comment = " ".join(f"{k}={_fmt(v)}" for k, v in meta.items())
    body = svg_text.replace("<svg", f"<!-- {comment} -->\n<svg", 1)
    path.write_text(body)
    return path


# --------------------------------------------------------------------------
# forward-solve cache


def cache_path(output_dir, key: str) -> Path:
    return Path(output_dir) / "cache" / f"forward-{key[:16]}.npz"


def save_field_cache(path, field: SpaceTimeField, key: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez_compressed(
        path, times=field.times, values=field.values,
        key=np.array(key), version=np.array(__version__),
    )
    return path


def load_field_cache(path, grid: Grid2D, key: str) -> Optional[SpaceTimeField]:
    path = Path(path)
    if not path.exists():
        return None
    with np.load(path, allow_pickle=False) as data:
        if str(data["key"]) != key:
            return None
        times = data["times"]
        values = data["values"]
    if values.shape[1:] != grid.shape:
        return None
    return SpaceTimeField(grid=grid, times=times, values=values)
