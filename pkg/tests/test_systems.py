import math

import numpy as np
import pytest

from src.dynamics.systems import (
    STATE_LABELS,
    SYSTEM_DEFAULTS,
    SystemName,
    default_initial_state,
    hamiltonian_value,
    hierarchical_triple,
    kepler_period,
    make_system,
)
from src.utils.errors import DimensionMismatchError, IntegrationSingularityError


def numerical_gradient(fn, x, h=1e-6):
    grad = np.zeros_like(x)
    for i in range(len(x)):
        step = np.zeros_like(x)
        step[i] = h * max(1.0, abs(x[i]))
        grad[i] = (fn(x + step) - fn(x - step)) / (2 * step[i])
    return grad


def hamilton_residual(system, x):
    """f(x) minus (dH/dp, -dH/dq) with p = mass * velocity."""
    half = system.dim // 2
    grad = numerical_gradient(lambda s: float(system.hamiltonian(s)), x)
    expected = np.concatenate([grad[half:] / system.mass, -grad[:half] / system.mass])
    return system.eom(x, 0.0) - expected


@pytest.mark.parametrize("name", SystemName.ALL)
def test_defaults_match_dimensions(name):
    system = make_system(name)
    assert system.dim == len(STATE_LABELS[name])
    assert default_initial_state(name).shape == (system.dim,)
    assert SYSTEM_DEFAULTS[name].dt > 0


@pytest.mark.parametrize(
    "name,params,state",
    [
        ("harmonic", {}, [0.3, -0.7]),
        ("kepler", {}, [0.8, 0.4, -0.2, 1.1]),
        ("kepler", {"eps": 0.3}, [0.8, 0.4, -0.2, 1.1]),
        ("mirror", {}, [0.3, -0.5, 0.4, 0.2]),
        ("threebody", {"m": 2.0}, [0, 0, 1.0, 0.2, -0.4, 1.1, 0.1, 0.3, -0.2, 0.5, 0.0, -0.1]),
    ],
)
def test_equations_of_motion_follow_hamiltonian(name, params, state):
    system = make_system(name, **params)
    residual = hamilton_residual(system, np.array(state, dtype=float))
    np.testing.assert_allclose(residual, 0.0, atol=1e-5)


def test_pendulum_energy_is_constant_along_flow():
    system = make_system("pendulum")
    x = np.array([0.4, -1.1, 0.8, -0.3])
    grad = numerical_gradient(lambda s: float(system.hamiltonian(s)), x)
    assert abs(grad @ system.eom(x, 0.0)) < 1e-5


def test_hierarchical_triple_has_zero_centre_of_mass_and_momentum():
    x = hierarchical_triple()
    positions, velocities = x[:6].reshape(3, 2), x[6:].reshape(3, 2)
    np.testing.assert_allclose(positions.sum(axis=0), 0.0, atol=1e-9)
    np.testing.assert_allclose(velocities.sum(axis=0), 0.0, atol=1e-9)


def test_kepler_period_of_circular_orbit():
    assert kepler_period([1.0, 0.0, 0.0, 1.0]) == pytest.approx(2 * math.pi)


def test_kepler_period_rejects_unbound_orbit():
    with pytest.raises(ValueError):
        kepler_period([1.0, 0.0, 0.0, 2.0])


def test_unknown_system_and_parameter():
    with pytest.raises(ValueError):
        make_system("quartic")
    with pytest.raises(ValueError):
        make_system("harmonic", eps=0.1)


def test_hamiltonian_value_checks_dimension():
    with pytest.raises(DimensionMismatchError):
        hamiltonian_value(make_system("kepler"), [1.0, 0.0])


def test_kepler_centre_is_singular():
    system = make_system("kepler")
    with pytest.raises(IntegrationSingularityError):
        system.eom(np.array([0.0, 0.0, 1.0, 0.0]), 0.0)


def test_threebody_collision_reports_pair():
    system = make_system("threebody", m=1.0)
    x = np.zeros(12)
    x[2:4] = [5.0, 0.0]
    with pytest.raises(IntegrationSingularityError) as info:
        system.eom(x, 0.0)
    assert info.value.pair == (0, 2)
