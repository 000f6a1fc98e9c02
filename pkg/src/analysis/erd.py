"""
Explained ratio diagrams and conservation-law detection.

For each noise scale L: train a pull network, run a walk-pull chain from the
trajectory midpoint, take the local PCA explained ratios omega_i(L). In the
intermediate phase some ratios collapse toward zero; each collapsed
direction is a conserved quantity.

Two detection rules are reported side by side:
- threshold: components whose ratio drops below 0.1/N at some L
- order parameter: n_eff = max_L sum_i c(pi N omega_i(L)),
  c(x) = cos x for x < pi/2 and 0 otherwise
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.analysis.preprocess import covariance_eigenvalues
from src.models.pullnet import TrainConfig, train_pull
from src.sampling.sampler import SampleCloud, midpoint_index, walk_pull_chain
from src.utils.errors import InsufficientDataError, PoincareError
from src.utils.seeding import derive_seed, make_rng

logger = logging.getLogger(__name__)

THRESHOLD_FRACTION = 0.1

# Total variance (whitened units) below which a cloud counts as a single point.
DEGENERATE_VARIANCE = 1e-12


def default_L_grid(log10_min: float = -2.5, log10_max: float = 0.5, n_points: int = 13) -> np.ndarray:
    """Log-spaced grid that always contains L = 0.1."""
    grid = np.logspace(log10_min, log10_max, n_points)
    if not np.any(np.isclose(grid, 0.1)):
        grid = np.sort(np.append(grid, 0.1))
    return grid


def local_pca(cloud: Union[SampleCloud, np.ndarray]) -> np.ndarray:
    """Covariance eigenvalues divided by their sum, descending."""
    samples = cloud.samples if isinstance(cloud, SampleCloud) else np.asarray(cloud, dtype=float)
    if len(samples) <= samples.shape[1]:
        logger.warning(
            "local PCA on fewer samples than dimensions",
            extra={"n_samples": len(samples), "dim": samples.shape[1]},
        )
    eigvals = np.clip(covariance_eigenvalues(samples), 0.0, None)
    total = eigvals.sum()
    if total <= DEGENERATE_VARIANCE:
        # Every direction collapsed.
        return np.zeros_like(eigvals)
    return eigvals / total


def n_eff_of_ratios(ratios: Sequence[float], N: int) -> float:
    """sum_i c(pi N omega_i) with c(x) = cos x below pi/2, 0 above."""
    arg = np.pi * N * np.asarray(ratios, dtype=float)
    return float(np.sum(np.where(arg < np.pi / 2, np.cos(arg), 0.0)))


@dataclass
class ExplainedRatioDiagram:
    """omega_i(L) with rows i (descending per column) and columns over L_grid."""
    L_grid: np.ndarray
    ratios: np.ndarray
    n_eff_curve: np.ndarray
    N: int
    n_eff_std: np.ndarray
    losses: Dict[float, Tuple[float, float]] = field(default_factory=dict)
    failed: Dict[float, str] = field(default_factory=dict)

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.n_eff_curve)


@dataclass
class DetectionResult:
    n_detected_threshold: int
    n_eff_max: float
    n_linear: int
    n_total: int
    mode: str
    best_L: Optional[float]
    margins: List[float]
    L_a: Optional[float] = None
    L_b: Optional[float] = None

    @property
    def n_nonlinear(self) -> int:
        return self.n_total - self.n_linear

    def to_dict(self) -> dict:
        return {
            "n_detected_threshold": self.n_detected_threshold,
            "n_eff_max": self.n_eff_max,
            "n_linear": self.n_linear,
            "n_total": self.n_total,
            "mode": self.mode,
            "best_L": self.best_L,
            "threshold_margins": self.margins,
            "L_a": self.L_a,
            "L_b": self.L_b,
        }


def _erd_column(
    points: np.ndarray,
    L: float,
    cfg: TrainConfig,
    start: int,
    chain_length: int,
    n_chains: int,
    root_seed: int,
) -> Tuple[np.ndarray, float, float, Tuple[float, float]]:
    key = f"{L:.6g}"
    net, train_loss, test_loss = train_pull(points, cfg.for_scale(L, derive_seed(root_seed, "train", key)))

    ratios, n_effs = [], []
    for chain in range(n_chains):
        seed = derive_seed(root_seed, "chain", key, chain)
        cloud = walk_pull_chain(net, points[start], chain_length, make_rng(seed), seed=seed)
        omega = local_pca(cloud)
        ratios.append(omega)
        n_effs.append(n_eff_of_ratios(omega, points.shape[1]))

    mean_ratios = np.mean(ratios, axis=0)
    total = mean_ratios.sum()
    if total > 0:
        mean_ratios = mean_ratios / total
    # The curve is read off the averaged column; chains only supply the spread.
    n_eff = n_eff_of_ratios(mean_ratios, points.shape[1])
    return mean_ratios, n_eff, float(np.std(n_effs)), (train_loss, test_loss)


def build_erd(
    points: np.ndarray,
    L_grid: Sequence[float],
    cfg: TrainConfig,
    chain_length: int = 1000,
    start_index: Optional[int] = None,
    n_chains: int = 1,
    root_seed: int = 0,
    jobs: int = 1,
) -> ExplainedRatioDiagram:
    """
    Explained ratio diagram of whitened points over L_grid.

    A column whose training or chain fails is left as NaN and listed in
    `failed`; the remaining columns are still computed.
    """
    points = np.asarray(points, dtype=float)
    if len(points) < 2:
        raise InsufficientDataError("Explained ratio diagram needs at least two trajectory points")
    grid = np.sort(np.asarray(L_grid, dtype=float))
    dim = points.shape[1]
    start = midpoint_index(len(points)) if start_index is None else start_index

    def column(L: float):
        try:
            return _erd_column(points, L, cfg, start, chain_length, n_chains, root_seed)
        except PoincareError as e:
            logger.warning("ERD column failed", extra={"L": L, "error": str(e)})
            return e

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(column, grid))
    else:
        results = [column(L) for L in grid]

    ratios = np.full((dim, len(grid)), np.nan)
    n_eff = np.full(len(grid), np.nan)
    n_eff_std = np.full(len(grid), np.nan)
    losses, failed = {}, {}
    for j, (L, result) in enumerate(zip(grid, results)):
        if isinstance(result, PoincareError):
            failed[float(L)] = f"{type(result).__name__}: {result}"
            continue
        ratios[:, j], n_eff[j], n_eff_std[j], losses[float(L)] = result

    logger.info(
        "built explained ratio diagram",
        extra={"n_scales": len(grid), "n_failed": len(failed), "dim": dim},
    )
    return ExplainedRatioDiagram(
        L_grid=grid, ratios=ratios, n_eff_curve=n_eff, N=dim,
        n_eff_std=n_eff_std, losses=losses, failed=failed,
    )


def transition_scales(erd: ExplainedRatioDiagram) -> Tuple[Optional[float], Optional[float]]:
    """
    (L_a, L_b): first grid scale where n_eff reaches half its maximum, and the
    first scale past the peak where it falls back below half.
    """
    valid = erd.valid
    if not np.any(valid):
        return None, None
    L, curve = erd.L_grid[valid], erd.n_eff_curve[valid]
    half = 0.5 * np.max(curve)
    if half <= 0:
        return None, None
    peak = int(np.argmax(curve))
    rising = np.flatnonzero(curve[:peak + 1] >= half)
    L_a = float(L[rising[0]]) if len(rising) else None
    falling = np.flatnonzero(curve[peak:] < half)
    L_b = float(L[peak + falling[0]]) if len(falling) else None
    return L_a, L_b


def transition_sharpness(erd: ExplainedRatioDiagram) -> float:
    """Steepest drop of n_eff per decade of L past the peak (0 if it never drops)."""
    valid = erd.valid
    log_L, curve = np.log10(erd.L_grid[valid]), erd.n_eff_curve[valid]
    if len(curve) < 2:
        return 0.0
    peak = int(np.argmax(curve))
    slopes = -np.diff(curve[peak:]) / np.diff(log_L[peak:])
    return float(max(np.max(slopes), 0.0)) if len(slopes) else 0.0


def detect(erd: ExplainedRatioDiagram, n_linear: int = 0, mode: str = "neff") -> DetectionResult:
    """
    Apply both detection rules.

    `mode` picks which one feeds n_total: "neff" (rounded max n_eff) or
    "threshold" (count of components below 0.1/N).
    """
    if mode not in ("neff", "threshold"):
        raise ValueError(f"Unknown detection mode '{mode}'")
    valid = erd.valid
    if np.count_nonzero(valid) < 3:
        raise InsufficientDataError(
            f"Detection needs at least 3 completed grid points, have {np.count_nonzero(valid)}"
        )

    threshold = THRESHOLD_FRACTION / erd.N
    lowest = np.min(erd.ratios[:, valid], axis=1)
    n_detected = int(np.count_nonzero(lowest < threshold))
    curve = erd.n_eff_curve[valid]
    n_eff_max = float(np.max(curve))
    best_L = float(erd.L_grid[valid][int(np.argmax(curve))])
    nonlinear = int(round(n_eff_max)) if mode == "neff" else n_detected
    L_a, L_b = transition_scales(erd)

    return DetectionResult(
        n_detected_threshold=n_detected,
        n_eff_max=n_eff_max,
        n_linear=n_linear,
        n_total=n_linear + nonlinear,
        mode=mode,
        best_L=best_L,
        margins=[float(m) for m in lowest - threshold],
        L_a=L_a,
        L_b=L_b,
    )
