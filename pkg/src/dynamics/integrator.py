"""
Fixed-step classic Runge-Kutta integration.

Produces Trajectory objects: the time-ordered state samples that every
downstream analysis works from.
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.dynamics.systems import SystemSpec, hamiltonian_values
from src.utils.errors import DimensionMismatchError, IntegrationSingularityError

logger = logging.getLogger(__name__)


@dataclass
class Trajectory:
    """States x(t_i) sampled at constant spacing dt."""
    system: Optional[SystemSpec]
    x0: np.ndarray
    dt: float
    points: np.ndarray  # (n_points, N)
    times: np.ndarray   # (n_points,)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def window(self, t0: float, t1: float) -> "Trajectory":
        """Sub-trajectory with t0 <= t < t1."""
        mask = (self.times >= t0) & (self.times < t1)
        points = self.points[mask]
        x0 = points[0] if len(points) else self.x0
        return Trajectory(self.system, x0, self.dt, points, self.times[mask])


def _derivative(system: SystemSpec, x: np.ndarray, t: float) -> np.ndarray:
    k = system.eom(x, t)
    if not np.all(np.isfinite(k)):
        raise IntegrationSingularityError(f"Non-finite derivative in {system.name} at t={t:.6g}")
    return k


def rk4_step(system: SystemSpec, x: np.ndarray, t: float, dt: float) -> np.ndarray:
    """One classic RK4 update x + (k1 + 2k2 + 2k3 + k4) dt / 6."""
    if dt == 0:
        return np.array(x, dtype=float, copy=True)
    half = 0.5 * dt
    k1 = _derivative(system, x, t)
    k2 = _derivative(system, x + half * k1, t + half)
    k3 = _derivative(system, x + half * k2, t + half)
    k4 = _derivative(system, x + dt * k3, t + dt)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_states(system: SystemSpec, x0, dt: float, n_steps: int, t0: float = 0.0) -> np.ndarray:
    """
    Raw state array of n_steps + 1 rows starting at x0.

    dt may be negative (backward integration); simulate() wraps this for the
    forward case and attaches times.
    """
    x = np.asarray(x0, dtype=float)
    if x.shape != (system.dim,):
        raise DimensionMismatchError(
            f"{system.name} expects a state of length {system.dim}, got shape {x.shape}"
        )
    if not np.all(np.isfinite(x)):
        raise IntegrationSingularityError("Initial state contains NaN or Inf", step=0)

    states = np.empty((n_steps + 1, system.dim))
    states[0] = x
    report_every = max(n_steps // 10, 1)
    t = t0
    for step in range(1, n_steps + 1):
        try:
            x = rk4_step(system, x, t, dt)
        except IntegrationSingularityError as e:
            raise e.at_step(step) from e
        states[step] = x
        t = t0 + step * dt
        if step % report_every == 0:
            logger.debug("integration progress", extra={"system": system.name, "step": step})
    return states


def simulate(system: SystemSpec, x0, dt: float, n_steps: int) -> Trajectory:
    """Integrate n_steps forward from x0; deterministic."""
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")

    logger.info(
        "simulating trajectory",
        extra={"system": system.name, "dt": dt, "n_steps": n_steps, "params": system.params},
    )
    points = integrate_states(system, x0, dt, n_steps)
    times = dt * np.arange(n_steps + 1)
    return Trajectory(system=system, x0=np.asarray(x0, dtype=float), dt=dt, points=points, times=times)


def energy_drift(trajectory: Trajectory) -> float:
    """max_i |H0(x_i) - H0(x_0)| / max(1, |H0(x_0)|)."""
    if trajectory.system is None:
        raise ValueError("Trajectory carries no system; energy is undefined")
    energies = hamiltonian_values(trajectory.system, trajectory.points)
    reference = energies[0]
    return float(np.max(np.abs(energies - reference)) / max(1.0, abs(reference)))
