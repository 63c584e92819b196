"""CSV and JSON round-trip formats.

CSV files are RFC 4180 (CRLF, comma-separated) and carry floats through
repr, so values survive write/read bit-identically.  JSON output is
sorted-key with indent 2: identical inputs give byte-identical files.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Union

import numpy as np

from .errors import ConfigError
from .rates import IncrementTable, TiltDensity
from .simulate import EventLog, OccupancySurface, SurfaceGrid

PathLike = Union[str, Path]


def _fmt(x: float) -> str:
    return repr(float(x))


# -- event logs ---------------------------------------------------------------

def write_events_csv(log: EventLog, path: PathLike) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["arrival_epoch", "service_time"])
        for a, v in zip(log.arrivals, log.services):
            w.writerow([_fmt(a), _fmt(v)])


def read_events_csv(path: PathLike, lam: float, horizon: float,
                    seed=None) -> EventLog:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:2] != ["arrival_epoch", "service_time"]:
        raise ConfigError(f"{path}: not an event-log CSV")
    data = np.array([[float(r[0]), float(r[1])] for r in rows[1:]],
                    dtype=float).reshape(-1, 2)
    return EventLog(lam=lam, horizon=horizon, arrivals=data[:, 0],
                    services=data[:, 1], seed=seed)


# -- grid matrices (surfaces, tilts, increment tables) ------------------------

def _write_matrix_csv(path: PathLike, corner: str, col_nodes, row_nodes,
                      values) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([corner] + [_fmt(y) for y in col_nodes])
        for t, row in zip(row_nodes, values):
            w.writerow([_fmt(t)] + [_fmt(v) for v in row])


def _read_matrix_csv(path: PathLike) -> tuple[str, np.ndarray, np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ConfigError(f"{path}: matrix CSV needs a header and rows")
    corner = rows[0][0]
    col_nodes = np.array([float(x) for x in rows[0][1:]])
    row_nodes = np.array([float(r[0]) for r in rows[1:]])
    values = np.array([[float(x) for x in r[1:]] for r in rows[1:]])
    return corner, col_nodes, row_nodes, values


def write_surface_csv(surf: OccupancySurface, path: PathLike) -> None:
    _write_matrix_csv(path, "t\\y", surf.grid.y_nodes, surf.grid.t_nodes,
                      surf.values)


def read_surface_csv(path: PathLike, lam: float = 1.0,
                     scaled: bool = True) -> OccupancySurface:
    _, y_nodes, t_nodes, values = _read_matrix_csv(path)
    return OccupancySurface(grid=SurfaceGrid(t_nodes, y_nodes), values=values,
                            lam=lam, scaled=scaled)


def write_tilt_csv(v: TiltDensity, path: PathLike) -> None:
    _write_matrix_csv(path, "t\\r", v.r_nodes, v.t_nodes, v.values)


def read_tilt_csv(path: PathLike) -> TiltDensity:
    _, r_nodes, t_nodes, values = _read_matrix_csv(path)
    return TiltDensity.from_grid(t_nodes, r_nodes, values)


def write_increments_csv(table: IncrementTable, path: PathLike) -> None:
    _write_matrix_csv(path, "t\\y", table.y_part[1:], table.t_part[1:],
                      table.deltas)


def read_increments_csv(path: PathLike) -> IncrementTable:
    _, y_cells, t_cells, deltas = _read_matrix_csv(path)
    return IncrementTable(t_part=np.concatenate([[0.0], t_cells]),
                          y_part=np.concatenate([[0.0], y_cells]),
                          deltas=deltas)


# -- JSON ----------------------------------------------------------------------

def tilt_to_json_dict(v: TiltDensity) -> dict:
    return {"grid": {"t_nodes": v.t_nodes.tolist(),
                     "y_nodes": v.r_nodes.tolist()},
            "values": v.values.tolist(), "lambda": 1.0, "scaled": True}


def tilt_from_json_dict(d: dict) -> TiltDensity:
    try:
        return TiltDensity.from_grid(np.asarray(d["grid"]["t_nodes"], float),
                                     np.asarray(d["grid"]["y_nodes"], float),
                                     np.asarray(d["values"], float))
    except KeyError as exc:
        raise ConfigError(f"tilt JSON missing field: {exc}") from exc


def increments_to_json_dict(table: IncrementTable) -> dict:
    return {"grid": {"t_nodes": table.t_part.tolist(),
                     "y_nodes": table.y_part.tolist()},
            "values": table.deltas.tolist(), "lambda": 1.0, "scaled": True}


def increments_from_json_dict(d: dict) -> IncrementTable:
    try:
        return IncrementTable(t_part=np.asarray(d["grid"]["t_nodes"], float),
                              y_part=np.asarray(d["grid"]["y_nodes"], float),
                              deltas=np.asarray(d["values"], float))
    except KeyError as exc:
        raise ConfigError(f"increment JSON missing field: {exc}") from exc


def surface_to_json_dict(surf: OccupancySurface) -> dict:
    return {"grid": {"t_nodes": surf.grid.t_nodes.tolist(),
                     "y_nodes": surf.grid.y_nodes.tolist()},
            "values": surf.values.tolist(),
            "lambda": surf.lam,
            "scaled": surf.scaled}


def surface_from_json_dict(d: dict) -> OccupancySurface:
    try:
        grid = SurfaceGrid(np.asarray(d["grid"]["t_nodes"], float),
                           np.asarray(d["grid"]["y_nodes"], float))
        return OccupancySurface(grid=grid,
                                values=np.asarray(d["values"], float),
                                lam=float(d.get("lambda", 1.0)),
                                scaled=bool(d.get("scaled", False)))
    except KeyError as exc:
        raise ConfigError(f"surface JSON missing field: {exc}") from exc


def dump_json(obj: dict, path: PathLike) -> None:
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def json_line(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True)


def write_decay_csv(lambdas, log_probs, ratios, path: PathLike) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lambda", "log_prob", "ratio"])
        for lam, lp, r in zip(lambdas, log_probs, ratios):
            w.writerow([_fmt(lam), _fmt(lp), _fmt(r)])
