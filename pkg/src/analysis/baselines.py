"""
Comparison dimensionality estimators.

1. Global PCA: count non-vanishing covariance eigenvalues (sees only
   hyperplanes, so only linear conservation laws)
2. Autoencoder: smallest bottleneck width s reconstructing the data to a
   fixed error threshold
3. Fractal (correlation) dimension: slope of log pair count against log
   distance over an intermediate range of scales
"""
import copy
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
from scipy.spatial.distance import pdist
from scipy.stats import linregress
from torch import nn

from src.analysis.preprocess import DEFAULT_EPS_P, covariance_eigenvalues, fit_whiten, vanishing_indices
from src.models.pullnet import TrainConfig, build_mlp, fit_denoiser, init_weights
from src.utils.errors import InsufficientDataError
from src.utils.seeding import derive_seed

logger = logging.getLogger(__name__)

AUTOENCODER_THRESHOLD = 1e-3

# Auto-window heuristics for the pair-count slope.
SLOPE_TOLERANCE = 0.2
MIN_PAIRS = 50
MAX_SCALE_FRACTION = 0.1


# ---------------------------------------------------------------------------
# Global PCA


def global_pca_dim(points: np.ndarray, eps_p: float = DEFAULT_EPS_P) -> int:
    """N minus the number of vanishing covariance eigenvalues."""
    return fit_whiten(points, eps_p=eps_p, reduce=True).output_dim


def pca_eigenvalue_report(points: np.ndarray, eps_p: float = DEFAULT_EPS_P) -> Dict[str, object]:
    points = np.asarray(points, dtype=float)
    if len(points) < points.shape[1] + 1:
        raise InsufficientDataError(f"Need at least {points.shape[1] + 1} points for PCA")
    eigvals = covariance_eigenvalues(points)
    vanishing = vanishing_indices(eigvals, eps_p)
    return {
        "eigenvalues": eigvals.tolist(),
        "explained_ratios": (np.clip(eigvals, 0, None) / np.sum(np.clip(eigvals, 0, None))).tolist(),
        "vanishing": vanishing.tolist(),
        "dimension": int(len(eigvals) - len(vanishing)),
        "n_linear": int(len(vanishing)),
    }


# ---------------------------------------------------------------------------
# Autoencoder


class Autoencoder(nn.Module):
    """N -> hidden -> s -> hidden -> N with a linear bottleneck."""

    def __init__(self, dim: int, bottleneck: int, width: int = 256, activation: str = "tanh", seed: int = 0):
        super().__init__()
        self.dim, self.bottleneck, self.width, self.activation = dim, bottleneck, width, activation
        self.encoder = build_mlp([dim, width, bottleneck], activation)
        self.decoder = build_mlp([bottleneck, width, dim], activation)
        init_weights(self, seed)

    def forward(self, x):
        return self.decoder(self.encoder(x))

    def widened(self, bottleneck: int, seed: int) -> "Autoencoder":
        """
        Copy with a wider bottleneck that computes the same map.

        New bottleneck units keep their fresh encoder weights but start with
        zero decoder weights, so they add nothing until trained.
        """
        if bottleneck < self.bottleneck:
            raise ValueError(f"Cannot narrow bottleneck {self.bottleneck} to {bottleneck}")
        dtype = next(self.parameters()).dtype
        wide = Autoencoder(self.dim, bottleneck, self.width, self.activation, seed).to(dtype)
        s = self.bottleneck
        with torch.no_grad():
            wide.encoder[0].load_state_dict(self.encoder[0].state_dict())
            wide.encoder[2].weight[:s] = self.encoder[2].weight
            wide.encoder[2].bias[:s] = self.encoder[2].bias
            wide.decoder[0].weight[:, :s] = self.decoder[0].weight
            wide.decoder[0].weight[:, s:] = 0.0
            wide.decoder[0].bias.copy_(self.decoder[0].bias)
            wide.decoder[2].load_state_dict(self.decoder[2].state_dict())
        return wide


@dataclass
class AutoencoderReport:
    dimension: int
    threshold_met: bool
    test_error: Dict[int, float] = field(default_factory=dict)
    train_error: Dict[int, float] = field(default_factory=dict)
    threshold: float = AUTOENCODER_THRESHOLD
    # "fresh", "warm_start" or "carried" per s
    source: Dict[int, str] = field(default_factory=dict)

    def curve(self) -> List[Tuple[int, float, float]]:
        return [(s, self.train_error[s], self.test_error[s]) for s in sorted(self.test_error)]

    def is_monotone(self, tolerance: float = 0.1) -> bool:
        """Test error never rises by more than `tolerance` (relative) as s grows."""
        errors = [e for _, _, e in self.curve()]
        return all(b <= a * (1.0 + tolerance) for a, b in zip(errors[:-1], errors[1:]))


def autoencoder_dim(
    points: np.ndarray,
    s_range: Optional[Sequence[int]] = None,
    threshold: float = AUTOENCODER_THRESHOLD,
    cfg: Optional[TrainConfig] = None,
    restarts: int = 1,
) -> AutoencoderReport:
    """
    Smallest bottleneck s whose mean test reconstruction error is below threshold.

    Training reuses the pull-network loop with zero noise. Each s keeps the best
    of `restarts` fresh initializations, a warm start from the previous width's
    best model, and that model itself widened untrained. A wider bottleneck can
    always reproduce a narrower one, so the error curve never increases in s.
    """
    points = np.asarray(points, dtype=float)
    if len(points) < 2:
        raise InsufficientDataError("Autoencoder needs at least two points")
    dim = points.shape[1]
    s_values = list(s_range) if s_range is not None else list(range(1, dim + 1))
    if not s_values or min(s_values) < 1 or max(s_values) > dim:
        raise ValueError(f"Bottleneck widths must lie in [1, {dim}], got {s_values}")
    if restarts < 1:
        raise ValueError(f"restarts must be >= 1, got {restarts}")
    cfg = cfg or TrainConfig()
    train, test = points[1::2], points[0::2]

    report = AutoencoderReport(dimension=dim, threshold_met=False, threshold=threshold)
    previous: Optional[Tuple[Autoencoder, Tuple[float, float]]] = None
    for s in sorted(set(s_values)):
        candidates: List[Tuple[str, Autoencoder, Tuple[float, float]]] = []
        if previous is not None:
            prev_model, prev_errors = previous
            carried = prev_model.widened(s, derive_seed(cfg.seed, "autoencoder", s, "widen"))
            candidates.append(("carried", carried, prev_errors))
            warm = copy.deepcopy(carried)
            warm_seed = derive_seed(cfg.seed, "autoencoder", s, "warm")
            errors = fit_denoiser(warm, train, test, cfg.model_copy(update={"seed": warm_seed}), noise_scale=0.0)
            candidates.append(("warm_start", warm, errors))
        for attempt in range(restarts):
            seed = derive_seed(cfg.seed, "autoencoder", s, attempt)
            model = Autoencoder(dim, s, width=cfg.hidden[0], activation=cfg.activation, seed=seed)
            model = model.double() if cfg.dtype == "float64" else model
            errors = fit_denoiser(model, train, test, cfg.model_copy(update={"seed": seed}), noise_scale=0.0)
            candidates.append(("fresh", model, errors))

        source, model, best = min(candidates, key=lambda c: c[2][1])
        report.train_error[s], report.test_error[s] = best
        report.source[s] = source
        previous = (model, best)
        logger.info("autoencoder width done", extra={"s": s, "test_error": best[1], "source": source})

    passing = [s for s in sorted(report.test_error) if report.test_error[s] < threshold]
    if passing:
        report.dimension, report.threshold_met = passing[0], True
    else:
        logger.warning("no bottleneck width met the reconstruction threshold", extra={"threshold": threshold})
    return report


# ---------------------------------------------------------------------------
# Fractal (correlation) dimension


@dataclass
class FractalCurve:
    log_L: np.ndarray
    log_pairs: np.ndarray
    fit_window: Tuple[int, int]
    slope: float
    auto_window: bool
    notes: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "slope": self.slope,
            "fit_window": list(self.fit_window),
            "fit_range_L": [float(np.exp(self.log_L[self.fit_window[0]])), float(np.exp(self.log_L[self.fit_window[1]]))],
            "auto_window": self.auto_window,
            "notes": self.notes,
        }


def _auto_window(log_L: np.ndarray, log_pairs: np.ndarray, counts: np.ndarray, diameter: float) -> Optional[Tuple[int, int]]:
    """Longest run of bins whose local slope varies by less than SLOPE_TOLERANCE."""
    local = np.gradient(log_pairs, log_L)
    eligible = (counts >= MIN_PAIRS) & (np.exp(log_L) <= MAX_SCALE_FRACTION * diameter) & (local > 0)
    best: Optional[Tuple[int, int]] = None
    n = len(local)
    for i in range(n):
        if not eligible[i]:
            continue
        lo = hi = local[i]
        for j in range(i, n):
            if not eligible[j]:
                break
            lo, hi = min(lo, local[j]), max(hi, local[j])
            if hi - lo > SLOPE_TOLERANCE * np.median(local[i:j + 1]):
                break
            if j - i >= 2 and (best is None or j - i > best[1] - best[0]):
                best = (i, j)
    return best


def fractal_dim(
    points: np.ndarray,
    window: Optional[Tuple[float, float]] = None,
    max_points: int = 1000,
    rng: Optional[np.random.Generator] = None,
    n_bins: int = 40,
) -> FractalCurve:
    """
    Pair-count curve log N(<L) vs log L and its least-squares slope.

    Args:
        points: (M, N) array, whitened for cross-axis comparability
        window: (L_lo, L_hi) fit range; chosen automatically when None
        max_points: random subsample size (pair counting is quadratic)
        n_bins: number of log-spaced scales
    """
    points = np.asarray(points, dtype=float)
    if len(points) < 2:
        raise InsufficientDataError("Fractal dimension needs at least two points")
    rng = rng if rng is not None else np.random.default_rng(0)
    if len(points) > max_points:
        points = points[rng.choice(len(points), size=max_points, replace=False)]

    distances = np.sort(pdist(points))
    distances = distances[distances > 0]
    if len(distances) < 2:
        raise InsufficientDataError("All sampled points coincide")

    notes: List[str] = []
    scales = np.logspace(np.log10(distances[0]), np.log10(distances[-1]), n_bins)
    counts = np.searchsorted(distances, scales, side="left")
    populated = counts > 0
    if not np.all(populated):
        notes.append(f"dropped {int(np.count_nonzero(~populated))} small scales with no pairs")
    scales, counts = scales[populated], counts[populated]
    log_L, log_pairs = np.log(scales), np.log(counts.astype(float))

    auto = window is None
    if auto:
        span = _auto_window(log_L, log_pairs, counts, distances[-1])
        if span is None:
            span = (0, len(log_L) - 1)
            notes.append("no stable slope range found; fitted the whole curve")
    else:
        inside = np.flatnonzero((scales >= window[0]) & (scales <= window[1]))
        if len(inside) < 2:
            raise InsufficientDataError(f"Fit window {window} contains fewer than two scales")
        span = (int(inside[0]), int(inside[-1]))

    fit = linregress(log_L[span[0]:span[1] + 1], log_pairs[span[0]:span[1] + 1])
    slope = max(float(fit.slope), 0.0)
    return FractalCurve(log_L=log_L, log_pairs=log_pairs, fit_window=span, slope=slope, auto_window=auto, notes=notes)
