"""
Synthetic point clouds with known intrinsic dimension.

Used to check the phase structure of explained ratio diagrams and the
baseline estimators against exact answers.
"""
from typing import Optional

import numpy as np


def noisy_ellipse(
    n_points: int,
    b: float = 1.0,
    noise: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """Ellipse with semi-axes 1 and b plus isotropic Gaussian noise of std `noise`."""
    rng = rng if rng is not None else np.random.default_rng(0)
    phase = np.linspace(0.0, 2.0 * np.pi, n_points, endpoint=False)
    points = np.column_stack([np.cos(phase), b * np.sin(phase)])
    if noise > 0:
        points = points + rng.normal(0.0, noise, size=points.shape)
    return points


def unit_circle(n_points: int, rng: Optional[np.random.Generator] = None, random_phase: bool = False) -> np.ndarray:
    if random_phase:
        rng = rng if rng is not None else np.random.default_rng(0)
        phase = rng.uniform(0.0, 2.0 * np.pi, n_points)
    else:
        phase = np.linspace(0.0, 2.0 * np.pi, n_points, endpoint=False)
    return np.column_stack([np.cos(phase), np.sin(phase)])


def line_segment(n_points: int, direction=(1.0, 2.0, -1.0), rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Uniform points on a segment through the origin in R^len(direction)."""
    rng = rng if rng is not None else np.random.default_rng(0)
    direction = np.asarray(direction, dtype=float)
    direction = direction / np.linalg.norm(direction)
    return rng.uniform(-1.0, 1.0, size=(n_points, 1)) * direction


def unit_square(n_points: int, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    rng = rng if rng is not None else np.random.default_rng(0)
    return rng.uniform(0.0, 1.0, size=(n_points, 2))


def isotropic_gaussian(n_points: int, dim: int, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    rng = rng if rng is not None else np.random.default_rng(0)
    return rng.standard_normal((n_points, dim))
