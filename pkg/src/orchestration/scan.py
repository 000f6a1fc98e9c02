"""
Parameter and time-window scans with n_eff as an order parameter.

Every axis value is an independent job: simulate, whiten, train one pull
network at the fixed scale L = 0.1, run `seeds_per_value` chains from the
trajectory midpoint and average their n_eff. Jobs run on a bounded thread
pool; a failed value is recorded and the scan carries on.
"""
import logging
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.optimize import minimize_scalar
from scipy.stats import linregress

from src.analysis.erd import local_pca, n_eff_of_ratios
from src.analysis.preprocess import DEFAULT_EPS_N, DEFAULT_EPS_P, apply_whiten, fit_whiten
from src.dynamics.integrator import Trajectory, simulate
from src.dynamics.systems import SYSTEM_DEFAULTS, SystemName, kepler_period, make_system
from src.models.pullnet import TrainConfig, train_pull
from src.sampling.sampler import midpoint_index, walk_pull_chain
from src.utils.errors import InsufficientDataError, NoMaximumFoundError, PoincareError
from src.utils.seeding import derive_seed, make_rng

logger = logging.getLogger(__name__)

# A bracketed maximum must beat the bracket endpoints by at least this much.
FLAT_TOLERANCE = 0.25

_STATE_COMPONENT = re.compile(r"^x0\[(\d+)\]$")


class ScanAxis(str, Enum):
    KEPLER_EPS_VS_ORBITS = "kepler_eps_vs_orbits"
    PENDULUM_THETA0 = "pendulum_theta0"
    MIRROR_V0 = "mirror_v0"
    THREEBODY_TIME_WINDOW = "threebody_time_window"
    CUSTOM = "custom"


AXIS_SYSTEMS = {
    ScanAxis.KEPLER_EPS_VS_ORBITS: SystemName.KEPLER,
    ScanAxis.PENDULUM_THETA0: SystemName.PENDULUM,
    ScanAxis.MIRROR_V0: SystemName.MIRROR,
    ScanAxis.THREEBODY_TIME_WINDOW: SystemName.THREEBODY,
}


class ScanSpec(BaseModel):
    """
    One scan. `values` are the axis values:
    - kepler_eps_vs_orbits: force perturbations eps (orbit counts in `orbits`)
    - pendulum_theta0: theta1 = theta2 = theta0 in degrees
    - mirror_v0: vrho = vz = v0 / sqrt(2)
    - threebody_time_window: window start times (window length `window_length`)
    - custom: values of `custom_param` (a system parameter or "x0[i]")
    """
    model_config = ConfigDict(extra="forbid")

    axis: ScanAxis
    values: List[float]
    system: Optional[str] = None
    params: Dict[str, float] = Field(default_factory=dict)
    x0: Optional[List[float]] = None
    dt: Optional[float] = Field(default=None, gt=0)
    n_steps: Optional[int] = Field(default=None, ge=1)
    desk_scale: float = Field(default=1.0, gt=0)
    max_points: int = Field(default=100_000, ge=2)
    orbits: List[float] = Field(default_factory=list)
    window_length: Optional[float] = Field(default=None, gt=0)
    custom_param: Optional[str] = None
    fixed_L: float = Field(default=0.1, gt=0)
    seeds_per_value: int = Field(default=3, ge=1)
    chain_length: int = Field(default=1000, ge=1)
    eps_p: float = Field(default=DEFAULT_EPS_P, gt=0, lt=1)
    eps_n: float = Field(default=DEFAULT_EPS_N, ge=0)
    train: TrainConfig = Field(default_factory=TrainConfig)
    root_seed: int = Field(default=0, ge=0)
    jobs: int = Field(default=1, ge=1)

    @field_validator("values", "orbits")
    @classmethod
    def _sorted(cls, values: List[float]) -> List[float]:
        return sorted(float(v) for v in values)

    @model_validator(mode="after")
    def _check_axis(self) -> "ScanSpec":
        if not self.values:
            raise ValueError("values must not be empty")
        expected = AXIS_SYSTEMS.get(self.axis)
        if self.system is None:
            if expected is None:
                raise ValueError("custom scans need an explicit system")
            self.system = expected
        elif expected is not None and self.system != expected:
            raise ValueError(f"axis {self.axis.value} runs on {expected}, not {self.system}")
        if self.system not in SystemName.ALL:
            raise ValueError(f"Unknown system '{self.system}'")
        if self.axis == ScanAxis.KEPLER_EPS_VS_ORBITS and not self.orbits:
            raise ValueError("kepler_eps_vs_orbits needs a non-empty orbits list")
        if self.axis == ScanAxis.CUSTOM and not self.custom_param:
            raise ValueError("custom scans need custom_param")
        return self

    def resolved_dt(self) -> float:
        return self.dt if self.dt is not None else SYSTEM_DEFAULTS[self.system].dt

    def resolved_steps(self) -> int:
        base = self.n_steps if self.n_steps is not None else SYSTEM_DEFAULTS[self.system].n_steps
        return max(int(round(base * self.desk_scale)), 1)

    def resolved_x0(self) -> np.ndarray:
        if self.x0 is not None:
            return np.asarray(self.x0, dtype=float)
        return np.array(SYSTEM_DEFAULTS[self.system].x0, dtype=float)


@dataclass
class ScanPoint:
    value: float
    n_eff_mean: float = float("nan")
    n_eff_std: float = float("nan")
    orbits: Optional[float] = None
    n_linear: int = 0
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None

    @property
    def rounded(self) -> Optional[int]:
        return int(round(self.n_eff_mean)) if self.ok else None


@dataclass
class ScanResult:
    axis: str
    system: str
    points: List[ScanPoint]
    transitions: List[dict] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)

    @property
    def values(self) -> np.ndarray:
        return np.array([p.value for p in self.points])

    @property
    def n_eff(self) -> np.ndarray:
        return np.array([p.n_eff_mean for p in self.points])

    @property
    def failures(self) -> Dict[float, str]:
        return {p.value: p.error for p in self.points if not p.ok}

    def is_grid(self) -> bool:
        return any(p.orbits is not None for p in self.points)


# ---------------------------------------------------------------------------
# Single evaluation


def neff_at_fixed_L(points: np.ndarray, spec: ScanSpec, key: str) -> Tuple[float, float, int]:
    """
    (mean, std, n_linear) of total n_eff over `seeds_per_value` chains.

    Totals include the linear conserved quantities removed by whitening.
    """
    points = np.asarray(points, dtype=float)
    if len(points) > spec.max_points:
        points = points[::int(math.ceil(len(points) / spec.max_points))]
    model = fit_whiten(points, eps_p=spec.eps_p, reduce=True, eps_n=spec.eps_n)
    whitened = apply_whiten(model, points)

    cfg = spec.train.for_scale(spec.fixed_L, derive_seed(spec.root_seed, "scan", "train", key))
    net, _, _ = train_pull(whitened, cfg)
    start = whitened[midpoint_index(len(whitened))]
    totals = []
    for chain in range(spec.seeds_per_value):
        seed = derive_seed(spec.root_seed, "scan", "chain", key, chain)
        cloud = walk_pull_chain(net, start, spec.chain_length, make_rng(seed), seed=seed)
        totals.append(model.n_linear + n_eff_of_ratios(local_pca(cloud), whitened.shape[1]))
    return float(np.mean(totals)), float(np.std(totals)), model.n_linear


def _configure(spec: ScanSpec, value: float) -> Tuple[dict, np.ndarray]:
    """System parameters and initial state for one axis value."""
    params, x0 = dict(spec.params), spec.resolved_x0()
    if spec.axis == ScanAxis.PENDULUM_THETA0:
        theta = math.radians(value)
        x0 = np.array([theta, theta, 0.0, 0.0])
    elif spec.axis == ScanAxis.MIRROR_V0:
        x0 = x0.copy()
        x0[2] = x0[3] = value / math.sqrt(2.0)
    elif spec.axis == ScanAxis.CUSTOM:
        match = _STATE_COMPONENT.match(spec.custom_param)
        if match:
            x0 = x0.copy()
            x0[int(match.group(1))] = value
        else:
            params[spec.custom_param] = value
    return params, x0


def _evaluate_value(spec: ScanSpec, value: float) -> ScanPoint:
    key = f"{value:.10g}"
    try:
        params, x0 = _configure(spec, value)
        traj = simulate(make_system(spec.system, **params), x0, spec.resolved_dt(), spec.resolved_steps())
        mean, std, n_linear = neff_at_fixed_L(traj.points, spec, key)
        logger.info("scan value done", extra={"axis": spec.axis.value, "value": value, "n_eff": mean})
        return ScanPoint(value=value, n_eff_mean=mean, n_eff_std=std, n_linear=n_linear)
    except (PoincareError, ValueError, IndexError) as e:
        logger.warning("scan value failed", extra={"axis": spec.axis.value, "value": value, "error": str(e)})
        return ScanPoint(value=value, error=f"{type(e).__name__}: {e}")


def _kepler_row(spec: ScanSpec, eps: float) -> List[ScanPoint]:
    """One integration to the longest orbit count; shorter counts reuse its prefix."""
    x0, dt = spec.resolved_x0(), spec.resolved_dt()
    try:
        period = kepler_period(x0)
        total_steps = int(math.ceil(max(spec.orbits) * period / dt))
        traj = simulate(make_system(SystemName.KEPLER, **{**spec.params, "eps": eps}), x0, dt, total_steps)
    except (PoincareError, ValueError) as e:
        logger.warning("kepler row failed", extra={"eps": eps, "error": str(e)})
        return [ScanPoint(value=eps, orbits=o, error=f"{type(e).__name__}: {e}") for o in spec.orbits]

    row = []
    for orbits in spec.orbits:
        n_points = int(math.ceil(orbits * period / dt)) + 1
        key = f"{eps:.10g}/{orbits:.10g}"
        try:
            mean, std, n_linear = neff_at_fixed_L(traj.points[:n_points], spec, key)
            row.append(ScanPoint(value=eps, orbits=orbits, n_eff_mean=mean, n_eff_std=std, n_linear=n_linear))
        except (PoincareError, ValueError) as e:
            row.append(ScanPoint(value=eps, orbits=orbits, error=f"{type(e).__name__}: {e}"))
    logger.info("kepler row done", extra={"eps": eps, "n_orbit_counts": len(spec.orbits)})
    return row


def _parallel(fn: Callable, items: Sequence, jobs: int) -> list:
    if jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def _transitions(points: Sequence[ScanPoint]) -> List[dict]:
    """Adjacent successful values whose rounded counts differ."""
    ok = [p for p in points if p.ok]
    found = []
    for left, right in zip(ok[:-1], ok[1:]):
        if left.rounded != right.rounded:
            entry = {"between": [left.value, right.value], "from": left.rounded, "to": right.rounded}
            if left.orbits is not None:
                entry["orbits_between"] = [left.orbits, right.orbits]
            found.append(entry)
    return found


# ---------------------------------------------------------------------------
# Public operations


def run_scan(spec: ScanSpec) -> ScanResult:
    """Evaluate n_eff at every axis value (every (eps, orbits) pair for the Kepler grid)."""
    logger.info(
        "starting scan",
        extra={"axis": spec.axis.value, "system": spec.system, "n_values": len(spec.values), "jobs": spec.jobs},
    )
    if spec.axis == ScanAxis.THREEBODY_TIME_WINDOW:
        traj = simulate(
            make_system(spec.system, **spec.params), spec.resolved_x0(), spec.resolved_dt(), spec.resolved_steps()
        )
        gaps = np.diff(spec.values)
        length = spec.window_length or (float(gaps.min()) if len(gaps) else float(traj.times[-1] - spec.values[0]))
        return time_window_scan(traj, [(t0, t0 + length) for t0 in spec.values], spec)

    if spec.axis == ScanAxis.KEPLER_EPS_VS_ORBITS:
        rows = _parallel(lambda eps: _kepler_row(spec, eps), spec.values, spec.jobs)
        points = [p for row in rows for p in row]
        transitions = [t for row in rows for t in _transitions(row)]
        return ScanResult(axis=spec.axis.value, system=spec.system, points=points, transitions=transitions)

    points = _parallel(lambda v: _evaluate_value(spec, v), spec.values, spec.jobs)
    return ScanResult(axis=spec.axis.value, system=spec.system, points=points, transitions=_transitions(points))


def default_windows(traj: Trajectory, n_windows: int) -> List[Tuple[float, float]]:
    """Split the trajectory's time span into n_windows equal half-open windows."""
    if n_windows < 1:
        raise ValueError(f"n_windows must be >= 1, got {n_windows}")
    edges = np.linspace(traj.times[0], traj.times[-1] + traj.dt, n_windows + 1)
    return [(float(a), float(b)) for a, b in zip(edges[:-1], edges[1:])]


def time_window_scan(traj: Trajectory, windows: Sequence[Tuple[float, float]], spec: ScanSpec) -> ScanResult:
    """
    n_eff on the points of each time window; the axis value is the window start.

    Windows with too few points to whiten are skipped with a note.
    """
    t_lo, t_hi = float(traj.times[0]), float(traj.times[-1]) + traj.dt
    for t0, t1 in windows:
        if t0 < t_lo - 1e-9 or t1 > t_hi + 1e-9 or t1 <= t0:
            raise ValueError(f"Window ({t0}, {t1}) lies outside the trajectory span ({t_lo}, {t_hi})")

    notes: List[str] = []
    usable = []
    for t0, t1 in windows:
        sub = traj.window(t0, t1)
        if len(sub) < 2 * (traj.dim + 1):
            notes.append(f"skipped window ({t0:.6g}, {t1:.6g}): only {len(sub)} points")
            continue
        usable.append((t0, sub))

    def evaluate(item) -> ScanPoint:
        t0, sub = item
        try:
            mean, std, n_linear = neff_at_fixed_L(sub.points, spec, f"window/{t0:.10g}")
            return ScanPoint(value=t0, n_eff_mean=mean, n_eff_std=std, n_linear=n_linear)
        except PoincareError as e:
            return ScanPoint(value=t0, error=f"{type(e).__name__}: {e}")

    points = _parallel(evaluate, usable, spec.jobs)
    system = traj.system.name if traj.system is not None else (spec.system or "unknown")
    return ScanResult(
        axis=spec.axis.value, system=system, points=points, transitions=_transitions(points), notes=notes,
    )


def maximize_neff(
    spec: ScanSpec,
    bracket: Tuple[float, float],
    repeats: int = 3,
    xatol: Optional[float] = None,
) -> Tuple[float, float]:
    """
    Bounded golden-section refinement of the averaged n_eff over the scan axis.

    Each evaluation averages `repeats` independently seeded runs. Raises
    NoMaximumFoundError when the best interior value does not beat both
    bracket endpoints by FLAT_TOLERANCE.
    """
    lo, hi = sorted(float(b) for b in bracket)
    if not hi > lo:
        raise ValueError(f"Bracket must have positive width, got {bracket}")
    cache: Dict[float, float] = {}

    def averaged(value: float) -> float:
        if value not in cache:
            runs = []
            for r in range(repeats):
                run_spec = spec.model_copy(update={"root_seed": derive_seed(spec.root_seed, "maximize", r)})
                point = _evaluate_value(run_spec, value)
                if not point.ok:
                    raise NoMaximumFoundError(f"Evaluation at {value:.6g} failed: {point.error}")
                runs.append(point.n_eff_mean)
            cache[value] = float(np.mean(runs))
        return cache[value]

    result = minimize_scalar(
        lambda v: -averaged(v),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": xatol if xatol is not None else 1e-2 * (hi - lo)},
    )
    best_value, best = float(result.x), -float(result.fun)
    edge = max(averaged(lo), averaged(hi))
    logger.info("maximize_neff finished", extra={"value": best_value, "n_eff": best, "edge_n_eff": edge})
    if best - edge < FLAT_TOLERANCE:
        raise NoMaximumFoundError(
            f"n_eff is flat over [{lo:.6g}, {hi:.6g}]: best {best:.3f} vs endpoints {edge:.3f}"
        )
    return best_value, best


def crossings(result: ScanResult, level: float) -> List[float]:
    """Linearly interpolated axis values where the averaged n_eff curve crosses `level`."""
    ok = [p for p in result.points if p.ok and p.orbits is None]
    x = np.array([p.value for p in ok])
    y = np.array([p.n_eff_mean for p in ok]) - level
    found = []
    for i in range(len(ok) - 1):
        if y[i] == 0:
            found.append(float(x[i]))
        elif y[i] * y[i + 1] < 0:
            found.append(float(x[i] - y[i] * (x[i + 1] - x[i]) / (y[i + 1] - y[i])))
    if len(ok) and y[-1] == 0:
        found.append(float(x[-1]))
    return found


def breakdown_orbits(result: ScanResult, level: float = 2.5) -> Dict[float, float]:
    """For each eps, the orbit count where n_eff first drops below `level` (log-interpolated)."""
    by_eps: Dict[float, List[ScanPoint]] = {}
    for p in result.points:
        if p.ok and p.orbits is not None:
            by_eps.setdefault(p.value, []).append(p)
    found = {}
    for eps, row in sorted(by_eps.items()):
        row.sort(key=lambda p: p.orbits)
        for left, right in zip(row[:-1], row[1:]):
            if left.n_eff_mean >= level > right.n_eff_mean:
                frac = (left.n_eff_mean - level) / (left.n_eff_mean - right.n_eff_mean)
                found[eps] = float(np.exp(np.log(left.orbits) + frac * (np.log(right.orbits) - np.log(left.orbits))))
                break
    return found


def kepler_breakdown_slope(result: ScanResult, level: float = 2.5) -> float:
    """Slope of log(orbits at breakdown) against log(eps); about -1 when breakdown takes ~1/eps orbits."""
    found = {eps: orbits for eps, orbits in breakdown_orbits(result, level).items() if eps > 0}
    if len(found) < 2:
        raise InsufficientDataError(f"Need breakdown points at two or more eps values, found {len(found)}")
    eps = np.array(sorted(found))
    fit = linregress(np.log(eps), np.log([found[e] for e in eps]))
    return float(fit.slope)
