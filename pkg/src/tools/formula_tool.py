"""
Candidate conserved-quantity formulas.

Formulas are strings over a system's state labels (x, vy, theta1, ...) or
the generic names x0 ... x{N-1}, parsed with sympy and evaluated along a
trajectory with numpy. Supported: + - * / **, sin, cos, sqrt, atan2 and
arg (an alias of atan2).
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
import sympy
from sympy.core.function import AppliedUndef

from src.dynamics.integrator import Trajectory
from src.dynamics.systems import SYSTEM_DEFAULTS, SystemName
from src.utils.errors import FormulaError

logger = logging.getLogger(__name__)

_FUNCTIONS = {
    "sin": sympy.sin,
    "cos": sympy.cos,
    "sqrt": sympy.sqrt,
    "atan2": sympy.atan2,
    "arg": sympy.atan2,
}


@dataclass
class CandidateStats:
    mean: float
    std: float
    n_used: int
    n_excluded: int = 0

    @property
    def relative_std(self) -> float:
        """std / |mean|, the conservation quality of the candidate."""
        return self.std / abs(self.mean) if self.mean != 0 else float("inf")

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "std": self.std,
            "relative_std": self.relative_std,
            "n_used": self.n_used,
            "n_excluded": self.n_excluded,
        }


@dataclass(frozen=True)
class GroundTruthFormula:
    name: str
    expression: str
    approximate: bool = False


def argument_names(labels: Sequence[str]) -> List[str]:
    """The labels, plus generic x0 ... x{N-1} aliases unless a label already uses one of those names."""
    generic = [f"x{i}" for i in range(len(labels))]
    if set(generic) & set(labels):
        return list(labels)
    return list(labels) + generic


def state_symbols(labels: Sequence[str]) -> Dict[str, sympy.Symbol]:
    return {name: sympy.Symbol(name, real=True) for name in argument_names(labels)}


def parse_formula(formula: str, labels: Sequence[str]) -> sympy.Expr:
    symbols = state_symbols(labels)
    try:
        expr = sympy.sympify(formula, locals={**symbols, **_FUNCTIONS})
    except (sympy.SympifyError, SyntaxError, TypeError) as e:
        raise FormulaError(f"Cannot parse formula '{formula}': {e}") from e
    unknown = {str(s) for s in expr.free_symbols} - set(symbols)
    unknown |= {str(f.func) for f in expr.atoms(AppliedUndef)}
    if unknown:
        raise FormulaError(f"Formula '{formula}' references unknown symbols {sorted(unknown)}")
    return expr


def _labels_of(traj: Trajectory) -> Sequence[str]:
    if traj.system is not None:
        return traj.system.labels
    return [f"x{i}" for i in range(traj.dim)]


def evaluate_formula(formula: str, points: np.ndarray, labels: Sequence[str]) -> np.ndarray:
    """Formula value at every row of `points` (non-finite where undefined)."""
    points = np.asarray(points, dtype=float)
    expr = parse_formula(formula, labels)
    names = argument_names(labels)
    symbols = state_symbols(labels)
    fn = sympy.lambdify([symbols[name] for name in names], expr, modules="numpy")
    columns = [points[:, i % len(labels)] for i in range(len(names))]
    with np.errstate(all="ignore"):
        values = np.asarray(fn(*columns), dtype=float)
    return np.broadcast_to(values, (len(points),)).astype(float)


def evaluate_candidate(formula: str, traj: Trajectory) -> CandidateStats:
    """
    Mean and std of the formula along the trajectory.

    Rows where it is undefined (division by zero, sqrt of a negative) are
    excluded and counted.
    """
    values = evaluate_formula(formula, traj.points, _labels_of(traj))
    finite = np.isfinite(values)
    n_excluded = int(np.count_nonzero(~finite))
    if not np.any(finite):
        raise FormulaError(f"Formula '{formula}' is undefined on every trajectory point")
    if n_excluded:
        logger.warning("excluded rows where the formula is undefined", extra={"formula": formula, "n_excluded": n_excluded})
    used = values[finite]
    return CandidateStats(mean=float(np.mean(used)), std=float(np.std(used)), n_used=len(used), n_excluded=n_excluded)


def ground_truth_formulas(system_name: str, params: Optional[Dict[str, float]] = None) -> List[GroundTruthFormula]:
    """Known conserved quantities of each system, written over its state labels."""
    if system_name not in SystemName.ALL:
        raise ValueError(f"Unknown system '{system_name}'")
    params = {**SYSTEM_DEFAULTS[system_name].params, **(params or {})}

    if system_name == SystemName.HARMONIC:
        return [GroundTruthFormula("energy", "(x**2 + v**2)/2")]
    if system_name == SystemName.KEPLER:
        r = "sqrt(x**2 + y**2)"
        ang = "(x*vy - y*vx)"
        return [
            GroundTruthFormula("energy", f"(vx**2 + vy**2)/2 - 1/{r}"),
            GroundTruthFormula("angular_momentum", "x*vy - y*vx"),
            GroundTruthFormula("runge_lenz_x", f"{ang}*vy - x/{r}"),
            GroundTruthFormula("runge_lenz_angle", f"arg(-{ang}*vx - y/{r}, {ang}*vy - x/{r})"),
        ]
    if system_name == SystemName.PENDULUM:
        return [
            GroundTruthFormula(
                "energy",
                "-20*cos(theta1) - 10*cos(theta2) + omega1**2 + omega2**2/2 + omega1*omega2*cos(theta1 - theta2)",
            ),
            GroundTruthFormula(
                "small_angle_energy",
                "10*theta1**2 + 5*theta2**2 + omega1**2 + omega2**2/2 + omega1*omega2",
                approximate=True,
            ),
        ]
    if system_name == SystemName.MIRROR:
        return [GroundTruthFormula("energy", "(vrho**2 + vz**2)/2 + (rho**2 + z**2/5 + rho**2*z**2)/2")]

    m = repr(float(params["m"]))
    kinetic = f"{m}/2*(vx1**2 + vy1**2 + vx2**2 + vy2**2 + vx3**2 + vy3**2)"
    potential = " + ".join(
        f"1/sqrt((x{i} - x{j})**2 + (y{i} - y{j})**2)" for i, j in ((1, 2), (1, 3), (2, 3))
    )
    return [
        GroundTruthFormula("energy", f"{kinetic} - {m}**2*({potential})"),
        GroundTruthFormula("x_c", "(x1 + x2 + x3)/3"),
        GroundTruthFormula("y_c", "(y1 + y2 + y3)/3"),
        GroundTruthFormula("vx_c", "(vx1 + vx2 + vx3)/3"),
        GroundTruthFormula("vy_c", "(vy1 + vy2 + vy3)/3"),
        GroundTruthFormula("angular_momentum", "x1*vy1 - y1*vx1 + x2*vy2 - y2*vx2 + x3*vy3 - y3*vx3"),
    ]
