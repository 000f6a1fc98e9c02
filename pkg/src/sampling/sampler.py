"""
Inference-time walk-pull Monte Carlo.

Starting from a point on the whitened trajectory, alternate a walk step
(isotropic Gaussian noise at the network's scale L) and a pull step (the
trained network). The visited states approximate a random walk restricted to
the manifold, so their local covariance exposes its tangent space.
"""
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional

import numpy as np

from src.models.pullnet import PullNetwork, pull, walk
from src.utils.errors import RunawayChainError

logger = logging.getLogger(__name__)

# Whitened data has unit scale; a chain this far out means the pull map is broken.
RUNAWAY_NORM = 1e3


@dataclass
class SampleCloud:
    """Pulled-back states x'_k of one chain."""
    origin: np.ndarray
    L: float
    samples: np.ndarray
    seed: Optional[int] = None

    def metadata(self) -> dict:
        return {
            "origin": self.origin.tolist(),
            "L": self.L,
            "seed": self.seed,
            "chain_length": len(self.samples),
        }


def walk_pull_chain(
    net: PullNetwork,
    start: np.ndarray,
    n_steps: int,
    rng: np.random.Generator,
    seed: Optional[int] = None,
) -> SampleCloud:
    """Run x_{k+1} = pull(walk(x_k, L)) for n_steps and record every x_{k+1}."""
    if n_steps < 1:
        raise ValueError(f"Chain length must be >= 1, got {n_steps}")
    x = np.asarray(start, dtype=float)
    samples = np.empty((n_steps, len(x)))
    for k in range(n_steps):
        x = pull(net, walk(x, net.L, rng))
        norm = float(np.linalg.norm(x))
        if not np.isfinite(norm) or norm > RUNAWAY_NORM:
            raise RunawayChainError(step=k, norm=norm)
        samples[k] = x
    return SampleCloud(origin=np.asarray(start, dtype=float), L=net.L, samples=samples, seed=seed)


def midpoint_index(n_points: int) -> int:
    return n_points // 2


@dataclass
class StabilityReport:
    """n_eff(x) = max_L n_eff(x, L) over random starting points."""
    start_indices: np.ndarray
    n_eff: np.ndarray
    best_L: np.ndarray
    n_linear: int = 0
    chain_length: int = 0
    histogram: Dict[int, int] = field(default_factory=dict)

    @property
    def totals(self) -> np.ndarray:
        return self.n_eff + self.n_linear

    def fraction_correct(self, ground_truth: int) -> float:
        """Share of starts whose rounded total count equals ground_truth."""
        return float(np.mean(np.rint(self.totals) == ground_truth))

    def summary(self) -> dict:
        return {
            "n_points": len(self.n_eff),
            "chain_length": self.chain_length,
            "n_linear": self.n_linear,
            "n_eff_mean": float(np.mean(self.n_eff)),
            "n_eff_std": float(np.std(self.n_eff)),
            "histogram": {str(k): v for k, v in sorted(self.histogram.items())},
        }


def stability_sweep(
    nets_per_L: Mapping[float, PullNetwork],
    points: np.ndarray,
    rng: np.random.Generator,
    n_points: int = 100,
    chain_len: int = 1000,
    n_linear: int = 0,
) -> StabilityReport:
    """
    Repeat the local analysis from random trajectory points.

    Args:
        nets_per_L: one trained network per noise scale, keyed by L
        points: whitened trajectory the networks were trained on
        n_points: number of random starting points
        chain_len: walk-pull steps per chain
        n_linear: linear conserved quantities removed in preprocessing (added to totals)
    """
    # Imported here: erd builds on this module.
    from src.analysis.erd import local_pca, n_eff_of_ratios

    points = np.asarray(points, dtype=float)
    dim = points.shape[1]
    if chain_len <= dim:
        logger.warning(
            "chain shorter than the dimension; local PCA is rank deficient and n_eff is unreliable",
            extra={"chain_length": chain_len, "dim": dim},
        )

    n_points = min(n_points, len(points))
    starts = np.sort(rng.choice(len(points), size=n_points, replace=False))
    scales: List[float] = sorted(nets_per_L)
    n_eff = np.zeros(n_points)
    best_L = np.zeros(n_points)

    for row, index in enumerate(starts):
        values = []
        for L in scales:
            cloud = walk_pull_chain(nets_per_L[L], points[index], chain_len, rng)
            values.append(n_eff_of_ratios(local_pca(cloud), dim))
        best = int(np.argmax(values))
        n_eff[row], best_L[row] = values[best], scales[best]
        logger.debug("stability start done", extra={"start": int(index), "n_eff": n_eff[row]})

    histogram = Counter(int(v) for v in np.rint(n_eff + n_linear))
    return StabilityReport(
        start_indices=starts,
        n_eff=n_eff,
        best_L=best_L,
        n_linear=n_linear,
        chain_length=chain_len,
        histogram=dict(histogram),
    )
