"""Shared fixtures: small training configs and cheap trajectories."""
import numpy as np
import pytest
import torch

from src.dynamics.integrator import simulate
from src.dynamics.systems import make_system
from src.models.pullnet import TrainConfig


@pytest.fixture(autouse=True, scope="session")
def single_thread_torch():
    torch.set_num_threads(1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_train_config():
    """Seconds-scale training for mechanics tests, not for accuracy."""
    return TrainConfig(steps=60, batch=128, hidden=(16, 16), eval_points=512)


@pytest.fixture
def small_train_config():
    """Enough training to actually denoise a 2D curve."""
    return TrainConfig(steps=1000, batch=256, hidden=(32, 32), eval_points=2048)


@pytest.fixture
def harmonic_trajectory():
    return simulate(make_system("harmonic"), [1.0, 0.0], 1e-2, 1000)


@pytest.fixture
def kepler_trajectory():
    return simulate(make_system("kepler"), [1.0, 0.0, 0.0, 1.2], 1e-2, 2000)
