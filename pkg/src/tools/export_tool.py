"""
Gauge-fixed export for external symbolic regression.

States of trajectory A get target 1, states of trajectory B target 2, so a
regressor fitting target(state) has to recover a conserved quantity (up to
an affine map). An optional third trajectory goes to a sibling
`<stem>_eval.txt` without targets.
"""
import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from src.dynamics.integrator import Trajectory
from src.utils.errors import IndistinguishableTargetsError, MixedSystemError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
DEFAULT_TARGETS = (1.0, 2.0)


def _system_key(traj: Trajectory) -> Tuple[Optional[str], Tuple]:
    if traj.system is None:
        return None, ()
    return traj.system.name, tuple(sorted(traj.system.params.items()))


def _check_inputs(traj_a: Trajectory, traj_b: Trajectory, traj_c: Optional[Trajectory]) -> None:
    trajectories = [t for t in (traj_a, traj_b, traj_c) if t is not None]
    if len({_system_key(t) for t in trajectories}) > 1:
        raise MixedSystemError(
            f"Gauge-fixed export needs trajectories of one system, got {[_system_key(t)[0] for t in trajectories]}"
        )
    if len({t.dim for t in trajectories}) > 1:
        raise MixedSystemError("Trajectories have different state dimensions")
    if traj_a.points.shape == traj_b.points.shape and np.array_equal(traj_a.points, traj_b.points):
        raise IndistinguishableTargetsError("Trajectories A and B are identical; their targets carry no information")


def export_gauge_fixed(
    traj_a: Trajectory,
    traj_b: Trajectory,
    traj_c: Optional[Trajectory],
    path: PathLike,
    targets: Tuple[float, float] = DEFAULT_TARGETS,
) -> Dict[str, Any]:
    """
    Write the gauge-fixed table and its JSON manifest.

    Returns:
        {
            'data': str, 'eval': str or None, 'manifest': str,
            'rows': {'A': int, 'B': int, 'C': int}
        }
    """
    if targets[0] == targets[1]:
        raise IndistinguishableTargetsError(f"Targets must differ, got {targets}")
    _check_inputs(traj_a, traj_b, traj_c)

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table = np.vstack([
        np.column_stack([traj_a.points, np.full(len(traj_a), targets[0])]),
        np.column_stack([traj_b.points, np.full(len(traj_b), targets[1])]),
    ])
    np.savetxt(path, table, delimiter=" ", fmt="%.17g")

    eval_path = None
    if traj_c is not None:
        eval_path = path.with_name(f"{path.stem}_eval.txt")
        np.savetxt(eval_path, traj_c.points, delimiter=" ", fmt="%.17g")

    labels = list(traj_a.system.labels) if traj_a.system is not None else [f"x{i}" for i in range(traj_a.dim)]
    rows = {"A": len(traj_a), "B": len(traj_b), "C": len(traj_c) if traj_c is not None else 0}
    manifest = {
        "system": _system_key(traj_a)[0],
        "params": dict(traj_a.system.params) if traj_a.system is not None else {},
        "columns": labels + ["target"],
        "eval_columns": labels if traj_c is not None else None,
        "delimiter": " ",
        "targets": {"A": targets[0], "B": targets[1]},
        "rows": rows,
        "data_file": path.name,
        "eval_file": eval_path.name if eval_path is not None else None,
    }
    manifest_path = path.with_suffix(".json")
    manifest_path.write_text(json.dumps(manifest, indent=2))
    logger.info("wrote gauge-fixed dataset", extra={"path": str(path), **{f"rows_{k}": v for k, v in rows.items()}})
    return {
        "data": str(path),
        "eval": str(eval_path) if eval_path is not None else None,
        "manifest": str(manifest_path),
        "rows": rows,
    }


def load_gauge_fixed(path: PathLike) -> Tuple[np.ndarray, np.ndarray]:
    """(states, targets) read back from an exported table."""
    table = np.loadtxt(path, ndmin=2)
    return table[:, :-1], table[:, -1]
