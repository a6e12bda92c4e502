"""CSV / JSON-lines writers with a fixed column order."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Mapping, Optional

import numpy as np

from ..solvers import Trajectory


class EmitError(OSError):
    pass


def fmt(v) -> str:
    """12 significant digits; NaN and missing values become empty cells."""
    if v is None:
        return ""
    v = float(v)
    if math.isnan(v):
        return ""
    if v == 0.0:
        return "0"
    return f"{v:.12g}"


def trajectory_columns(traj: Trajectory) -> dict[str, np.ndarray]:
    K = traj.K
    cols: dict[str, np.ndarray] = {"k": np.arange(1, K + 1)}
    n = traj.z.shape[1]
    m = traj.lam.shape[1]
    for i in range(n):
        cols[f"z{i + 1}"] = traj.z[:, i]
    if traj.x is not None:
        for i in range(n):
            cols[f"x{i + 1}"] = traj.x[:, i]
    for j in range(m):
        cols[f"lambda{j + 1}"] = traj.lam[:, j]
    for j in range(m):
        cols[f"mu{j + 1}"] = traj.mu[:, j]
    alpha = traj.meta.get("alpha", 1.0)
    for j in range(m):
        cols[f"q_scaled{j + 1}"] = alpha * traj.Q[:, j]
    cols["f_avg"] = traj.f_avg
    cols["g_violation_max"] = traj.g_violation_max
    cols["bound_lower"] = traj.bound_lower
    cols["bound_upper"] = traj.bound_upper
    return cols


def _rows(cols: Mapping[str, np.ndarray]) -> Iterable[list[str]]:
    names = list(cols)
    K = len(cols[names[0]]) if names else 0
    for r in range(K):
        yield [str(int(cols[c][r])) if c == "k" else fmt(cols[c][r]) for c in names]


def write_table(cols: Mapping[str, np.ndarray], path: str | Path, format: str = "csv") -> Path:
    p = Path(path)
    names = list(cols)
    try:
        p.parent.mkdir(parents=True, exist_ok=True)
        with p.open("w", newline="") as fh:
            if format == "csv":
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(names)
                w.writerows(_rows(cols))
            elif format == "jsonlines":
                for row in _rows(cols):
                    rec = {c: (int(v) if c == "k" else (float(v) if v != "" else None))
                           for c, v in zip(names, row)}
                    fh.write(json.dumps(rec) + "\n")
            else:
                raise ValueError(f"unknown format {format!r}")
    except OSError as exc:
        raise EmitError(f"cannot write {p}: {exc}") from exc
    return p


def emit(traj: Optional[Trajectory], format: str, path: str | Path, n: int = 1, m: int = 1) -> Path:
    """Write a trajectory; ``None`` or an empty run gives a header-only file.

    ``n`` and ``m`` only shape the header when no trajectory is supplied.
    """
    if traj is None:
        cols = {"k": np.zeros(0)}
        for i in range(n):
            cols[f"z{i + 1}"] = np.zeros(0)
        for name in ("lambda", "mu", "q_scaled"):
            for j in range(m):
                cols[f"{name}{j + 1}"] = np.zeros(0)
        for c in ("f_avg", "g_violation_max", "bound_lower", "bound_upper"):
            cols[c] = np.zeros(0)
    else:
        cols = trajectory_columns(traj)
    return write_table(cols, path, format)


def write_meta(meta: dict, path: str | Path) -> Path:
    p = Path(path)
    try:
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(json.dumps(_jsonable(meta), indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise EmitError(f"cannot write {p}: {exc}") from exc
    return p


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return None if math.isnan(v) else (str(v) if math.isinf(v) else float(fmt(v) or 0))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj
