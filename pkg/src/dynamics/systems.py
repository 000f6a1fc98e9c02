"""
Hamiltonian test systems.

Each system is a SystemSpec bundling the equations of motion f(x, t), the
energy H0(x) and the number of independent conserved quantities. State
vectors concatenate generalized coordinates and velocities, G = 1.

| system    | N  | state                                  | n |
|-----------|----|----------------------------------------|---|
| harmonic  | 2  | x, v                                   | 1 |
| kepler    | 4  | x, y, vx, vy                           | 3 |
| pendulum  | 4  | theta1, theta2, omega1, omega2         | 1 |
| mirror    | 4  | rho, z, vrho, vz                       | 1 |
| threebody | 12 | x1, y1, x2, y2, x3, y3, vx1 ... vy3    | 6 |
"""
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Tuple

import numpy as np

from src.utils.errors import DimensionMismatchError, IntegrationSingularityError

# Abort instead of integrating through a close encounter.
MIN_SEPARATION = 1e-6

# Double pendulum: m1 = m2 = 1, l1 = l2 = 1, g = 10
PENDULUM_G = 10.0

THREEBODY_PAIRS = ((0, 1), (0, 2), (1, 2))


class SystemName:
    """Supported systems."""
    HARMONIC = "harmonic"
    KEPLER = "kepler"
    PENDULUM = "pendulum"
    MIRROR = "mirror"
    THREEBODY = "threebody"

    ALL = (HARMONIC, KEPLER, PENDULUM, MIRROR, THREEBODY)


@dataclass(frozen=True)
class SystemSpec:
    """A dynamical system: equations of motion plus its energy function."""
    name: str
    params: Dict[str, float]
    eom: Callable[[np.ndarray, float], np.ndarray]
    hamiltonian: Callable[[np.ndarray], np.ndarray]
    ground_truth_n: int
    dim: int
    labels: Tuple[str, ...]
    # Inertia multiplying velocities in H0; momenta are mass * velocity.
    mass: float = 1.0
    # False when the state holds velocities that are not canonical momenta.
    canonical: bool = True

    def describe(self) -> Dict[str, object]:
        return {"name": self.name, "params": dict(self.params), "dim": self.dim}


@dataclass(frozen=True)
class SystemDefaults:
    x0: Tuple[float, ...]
    dt: float
    n_steps: int
    params: Dict[str, float] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Harmonic oscillator: H = (x^2 + v^2) / 2


def _harmonic_eom(x: np.ndarray, t: float) -> np.ndarray:
    return np.array([x[1], -x[0]])


def _harmonic_energy(x: np.ndarray) -> np.ndarray:
    return 0.5 * (x[..., 0] ** 2 + x[..., 1] ** 2)


# ---------------------------------------------------------------------------
# Kepler problem with central force |F| = r^-(2 + eps)


def _kepler_radius(x: np.ndarray) -> np.ndarray:
    r = np.hypot(x[..., 0], x[..., 1])
    if np.any(r < MIN_SEPARATION):
        raise IntegrationSingularityError(
            "Kepler orbit collapsed onto the centre", radius=float(np.min(r))
        )
    return r


def _make_kepler(eps: float):
    def eom(x: np.ndarray, t: float) -> np.ndarray:
        r = float(_kepler_radius(x))
        scale = -(r ** -(3.0 + eps))
        return np.array([x[2], x[3], scale * x[0], scale * x[1]])

    def energy(x: np.ndarray) -> np.ndarray:
        r = _kepler_radius(x)
        kinetic = 0.5 * (x[..., 2] ** 2 + x[..., 3] ** 2)
        if eps == 0.0:
            return kinetic - 1.0 / r
        # Exact integral of the perturbed force; equals -1/r at eps = 0.
        return kinetic - r ** -(1.0 + eps) / (1.0 + eps)

    return eom, energy


def kepler_period(x0) -> float:
    """Orbital period of the unperturbed ellipse through x0."""
    x0 = np.asarray(x0, dtype=float)
    r = math.hypot(x0[0], x0[1])
    energy = 0.5 * (x0[2] ** 2 + x0[3] ** 2) - 1.0 / r
    if energy >= 0:
        raise ValueError(f"Initial condition is unbound (E = {energy:.4g})")
    semi_major = -1.0 / (2.0 * energy)
    return 2.0 * math.pi * semi_major ** 1.5


# ---------------------------------------------------------------------------
# Planar double pendulum, angles from the downward vertical


def _pendulum_eom(x: np.ndarray, t: float) -> np.ndarray:
    th1, th2, w1, w2 = x
    delta = th1 - th2
    sin_d, cos_d = math.sin(delta), math.cos(delta)
    b1 = -(w2 * w2) * sin_d - 2.0 * PENDULUM_G * math.sin(th1)
    b2 = (w1 * w1) * sin_d - PENDULUM_G * math.sin(th2)
    det = 2.0 - cos_d * cos_d
    a1 = (b1 - cos_d * b2) / det
    a2 = (2.0 * b2 - cos_d * b1) / det
    return np.array([w1, w2, a1, a2])


def _pendulum_energy(x: np.ndarray) -> np.ndarray:
    th1, th2, w1, w2 = x[..., 0], x[..., 1], x[..., 2], x[..., 3]
    return (
        -2.0 * PENDULUM_G * np.cos(th1)
        - PENDULUM_G * np.cos(th2)
        + w1 ** 2
        + 0.5 * w2 ** 2
        + w1 * w2 * np.cos(th1 - th2)
    )


# ---------------------------------------------------------------------------
# Magnetic mirror: H = (vrho^2 + vz^2)/2 + (rho^2 + z^2/5 + rho^2 z^2)/2


def _mirror_eom(x: np.ndarray, t: float) -> np.ndarray:
    rho, z, vrho, vz = x
    return np.array([vrho, vz, -rho * (1.0 + z * z), -z * (0.2 + rho * rho)])


def _mirror_energy(x: np.ndarray) -> np.ndarray:
    rho, z, vrho, vz = x[..., 0], x[..., 1], x[..., 2], x[..., 3]
    return 0.5 * (vrho ** 2 + vz ** 2) + 0.5 * (rho ** 2 + 0.2 * z ** 2 + rho ** 2 * z ** 2)


# ---------------------------------------------------------------------------
# Planar three-body problem with equal masses m


def _make_threebody(m: float):
    def eom(x: np.ndarray, t: float) -> np.ndarray:
        q = x[:6].reshape(3, 2)
        acc = np.zeros((3, 2))
        for i, j in THREEBODY_PAIRS:
            d = q[i] - q[j]
            r = math.hypot(d[0], d[1])
            if r < MIN_SEPARATION:
                raise IntegrationSingularityError(
                    f"Bodies {i + 1} and {j + 1} collided", pair=(i, j), radius=r
                )
            # Same vector added and subtracted keeps total momentum exact.
            pull = (m / (r * r * r)) * d
            acc[i] -= pull
            acc[j] += pull
        return np.concatenate([x[6:], acc.ravel()])

    def energy(x: np.ndarray) -> np.ndarray:
        v = x[..., 6:]
        kinetic = 0.5 * m * np.sum(v ** 2, axis=-1)
        potential = 0.0
        for i, j in THREEBODY_PAIRS:
            r = np.hypot(x[..., 2 * i] - x[..., 2 * j], x[..., 2 * i + 1] - x[..., 2 * j + 1])
            if np.any(r < MIN_SEPARATION):
                raise IntegrationSingularityError(
                    f"Bodies {i + 1} and {j + 1} collided", pair=(i, j), radius=float(np.min(r))
                )
            potential = potential - m * m / r
        return kinetic + potential

    return eom, energy


def hierarchical_triple(m: float = 5e6, a_inner: float = 150.0, a_outer: float = 1110.0) -> np.ndarray:
    """
    Tight circular binary (bodies 1, 2) orbited by a distant third body.

    Centre of mass sits at the origin with zero total momentum, so the four
    linear invariants x_c, y_c, vx_c, vy_c are all exactly zero.
    """
    v_inner = math.sqrt(2.0 * m / a_inner)
    v_outer = math.sqrt(3.0 * m / a_outer)
    com_binary_x, com_binary_vy = -a_outer / 3.0, -v_outer / 3.0

    positions = np.array([
        [com_binary_x - a_inner / 2.0, 0.0],
        [com_binary_x + a_inner / 2.0, 0.0],
        [2.0 * a_outer / 3.0, 0.0],
    ])
    velocities = np.array([
        [0.0, com_binary_vy - v_inner / 2.0],
        [0.0, com_binary_vy + v_inner / 2.0],
        [0.0, 2.0 * v_outer / 3.0],
    ])
    return np.concatenate([positions.ravel(), velocities.ravel()])


# ---------------------------------------------------------------------------

STATE_LABELS: Dict[str, Tuple[str, ...]] = {
    SystemName.HARMONIC: ("x", "v"),
    SystemName.KEPLER: ("x", "y", "vx", "vy"),
    SystemName.PENDULUM: ("theta1", "theta2", "omega1", "omega2"),
    SystemName.MIRROR: ("rho", "z", "vrho", "vz"),
    SystemName.THREEBODY: (
        "x1", "y1", "x2", "y2", "x3", "y3",
        "vx1", "vy1", "vx2", "vy2", "vx3", "vy3",
    ),
}

GROUND_TRUTH_N = {
    SystemName.HARMONIC: 1,
    SystemName.KEPLER: 3,
    SystemName.PENDULUM: 1,
    SystemName.MIRROR: 1,
    SystemName.THREEBODY: 6,
}

SYSTEM_DEFAULTS: Dict[str, SystemDefaults] = {
    SystemName.HARMONIC: SystemDefaults(x0=(1.0, 0.0), dt=1e-2, n_steps=1_000),
    SystemName.KEPLER: SystemDefaults(
        x0=(1.0, 0.0, 0.0, 1.2), dt=1e-2, n_steps=100_000, params={"eps": 0.0}
    ),
    SystemName.PENDULUM: SystemDefaults(
        x0=(2.0 * math.pi / 3.0, 2.0 * math.pi / 3.0, 0.0, 0.0), dt=1e-3, n_steps=1_000_000
    ),
    SystemName.MIRROR: SystemDefaults(
        x0=(0.3, 0.3, 1.0 / math.sqrt(2.0), 1.0 / math.sqrt(2.0)), dt=1e-3, n_steps=100_000
    ),
    SystemName.THREEBODY: SystemDefaults(
        x0=tuple(hierarchical_triple(5e6)), dt=1e-3, n_steps=200_000, params={"m": 5e6}
    ),
}


def make_system(name: str, **params: float) -> SystemSpec:
    """Build a SystemSpec, filling parameters from SYSTEM_DEFAULTS."""
    if name not in SystemName.ALL:
        raise ValueError(f"Unknown system '{name}'. Choose from {SystemName.ALL}")

    merged = dict(SYSTEM_DEFAULTS[name].params)
    unknown = set(params) - set(merged)
    if unknown:
        raise ValueError(f"System '{name}' has no parameters {sorted(unknown)}")
    merged.update({k: float(v) for k, v in params.items()})

    labels = STATE_LABELS[name]
    common = dict(name=name, params=merged, ground_truth_n=GROUND_TRUTH_N[name],
                  dim=len(labels), labels=labels)

    if name == SystemName.HARMONIC:
        return SystemSpec(eom=_harmonic_eom, hamiltonian=_harmonic_energy, **common)
    if name == SystemName.KEPLER:
        eom, energy = _make_kepler(merged["eps"])
        return SystemSpec(eom=eom, hamiltonian=energy, **common)
    if name == SystemName.PENDULUM:
        return SystemSpec(eom=_pendulum_eom, hamiltonian=_pendulum_energy, canonical=False, **common)
    if name == SystemName.MIRROR:
        return SystemSpec(eom=_mirror_eom, hamiltonian=_mirror_energy, **common)

    eom, energy = _make_threebody(merged["m"])
    return SystemSpec(eom=eom, hamiltonian=energy, mass=merged["m"], **common)


def default_initial_state(name: str) -> np.ndarray:
    return np.array(SYSTEM_DEFAULTS[name].x0, dtype=float)


def hamiltonian_value(system: SystemSpec, x) -> float:
    """H0 at a single state."""
    x = np.asarray(x, dtype=float)
    if x.shape != (system.dim,):
        raise DimensionMismatchError(
            f"{system.name} expects a state of length {system.dim}, got shape {x.shape}"
        )
    return float(system.hamiltonian(x))


def hamiltonian_values(system: SystemSpec, points: np.ndarray) -> np.ndarray:
    """H0 along an (M, N) array of states."""
    return np.asarray(system.hamiltonian(np.asarray(points, dtype=float)), dtype=float)
