"""
Trajectory persistence: CSV (`t,x0,...,x{N-1}`, 17 significant digits) plus
a JSON sidecar with system name, params, x0, dt and seed.
"""
import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np

from src.dynamics.integrator import Trajectory
from src.dynamics.systems import SystemName, make_system
from src.utils.errors import InsufficientDataError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def sidecar_path(csv_path: PathLike) -> Path:
    return Path(csv_path).with_suffix(".json")


def save_trajectory(traj: Trajectory, path: PathLike, seed: Optional[int] = None) -> Dict[str, Any]:
    """Write the CSV and its sidecar. Returns {'csv', 'sidecar', 'rows'}."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = ",".join(["t"] + [f"x{i}" for i in range(traj.dim)])
    table = np.column_stack([traj.times, traj.points])
    np.savetxt(path, table, delimiter=",", header=header, comments="", fmt="%.17g")

    sidecar = {
        "system": traj.system.name if traj.system is not None else None,
        "params": dict(traj.system.params) if traj.system is not None else {},
        "labels": list(traj.system.labels) if traj.system is not None else None,
        "x0": np.asarray(traj.x0).tolist(),
        "dt": traj.dt,
        "n_points": len(traj),
        "seed": seed,
    }
    sidecar_path(path).write_text(json.dumps(sidecar, indent=2))
    logger.info("wrote trajectory", extra={"path": str(path), "rows": len(traj)})
    return {"csv": str(path), "sidecar": str(sidecar_path(path)), "rows": len(traj)}


def load_trajectory(path: PathLike) -> Trajectory:
    """
    Read a trajectory CSV.

    A missing sidecar gives system=None. A CSV whose first header column is
    not `t` is read as bare states with unit spacing.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Trajectory file not found: {path}")
    with path.open() as handle:
        first = handle.readline().strip()
    has_header = bool(first) and not _is_numeric_row(first)
    columns = [c.strip() for c in first.split(",")] if has_header else []
    table = np.loadtxt(path, delimiter=",", skiprows=1 if has_header else 0, ndmin=2)
    if table.size == 0:
        raise InsufficientDataError(f"Trajectory file {path} has no rows")

    timed = bool(columns) and columns[0] == "t"
    points = table[:, 1:] if timed else table
    times = table[:, 0] if timed else np.arange(len(table), dtype=float)

    meta = _read_sidecar(path)
    system = None
    if meta.get("system") in SystemName.ALL:
        system = make_system(meta["system"], **meta.get("params", {}))
    dt = float(meta.get("dt") or (times[1] - times[0] if len(times) > 1 else 1.0))
    x0 = np.asarray(meta.get("x0", points[0]), dtype=float)
    return Trajectory(system=system, x0=x0, dt=dt, points=points, times=times)


def _read_sidecar(path: Path) -> Dict[str, Any]:
    side = sidecar_path(path)
    if not side.exists():
        logger.info("no sidecar; trajectory has no system", extra={"path": str(path)})
        return {}
    return json.loads(side.read_text())


def _is_numeric_row(line: str) -> bool:
    try:
        [float(v) for v in line.split(",")]
    except ValueError:
        return False
    return True
