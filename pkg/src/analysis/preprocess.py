"""
Prewhitening and linear conserved quantity detection.

Key responsibilities:
1. Fit an affine map giving trajectory data zero mean and identity covariance
2. Flag covariance eigenvalues that vanish (|lambda| < eps_p * max lambda);
   their eigenvectors e_i define linear conserved quantities H_i(x) = e_i . x
3. Drop those directions (reduce mode) or keep every direction with a
   regularized scale lambda^(1/2) + eps_n (no-reduction mode)
4. Track how covariance eigenvalues shift when isotropic noise is added
"""
import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from src.utils.errors import DimensionMismatchError, InsufficientDataError

logger = logging.getLogger(__name__)

DEFAULT_EPS_P = 1e-3
DEFAULT_EPS_N = 1e-3


@dataclass(frozen=True)
class WhitenModel:
    """Fitted whitening transform. Row i of `eigvecs` is e_i."""
    mean: np.ndarray
    eigvals: np.ndarray
    eigvecs: np.ndarray
    kept: Tuple[int, ...]
    removed: Tuple[int, ...]
    eps_p: float = DEFAULT_EPS_P
    eps_n: float = DEFAULT_EPS_N
    reduce: bool = True

    @property
    def input_dim(self) -> int:
        return len(self.mean)

    @property
    def output_dim(self) -> int:
        return len(self.kept)

    @property
    def n_linear(self) -> int:
        return len(self.removed)

    @property
    def scales(self) -> np.ndarray:
        """Divisor applied to each kept principal coordinate."""
        lam = np.clip(self.eigvals[list(self.kept)], 0.0, None)
        if self.reduce:
            return np.sqrt(lam)
        return np.sqrt(lam) + self.eps_n

    def to_dict(self) -> Dict[str, Any]:
        return {
            "mean": self.mean.tolist(),
            "eigvals": self.eigvals.tolist(),
            "eigvecs": self.eigvecs.tolist(),
            "kept": list(self.kept),
            "removed": list(self.removed),
            "eps_p": self.eps_p,
            "eps_n": self.eps_n,
            "reduce": self.reduce,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "WhitenModel":
        return cls(
            mean=np.asarray(data["mean"], dtype=float),
            eigvals=np.asarray(data["eigvals"], dtype=float),
            eigvecs=np.asarray(data["eigvecs"], dtype=float),
            kept=tuple(data["kept"]),
            removed=tuple(data["removed"]),
            eps_p=float(data["eps_p"]),
            eps_n=float(data["eps_n"]),
            reduce=bool(data["reduce"]),
        )


def _sorted_covariance_eigh(centered: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Eigenpairs of the (1/M) covariance, descending; eigenvectors as rows."""
    cov = centered.T @ centered / len(centered)
    cov = 0.5 * (cov + cov.T)
    eigvals, eigvecs = linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    return eigvals[order], eigvecs[:, order].T


def covariance_eigenvalues(points: np.ndarray) -> np.ndarray:
    """Descending eigenvalues of the sample covariance."""
    points = np.asarray(points, dtype=float)
    centered = points - points.mean(axis=0)
    cov = centered.T @ centered / len(points)
    return np.sort(linalg.eigvalsh(0.5 * (cov + cov.T)))[::-1]


def vanishing_indices(eigvals: np.ndarray, eps_p: float) -> np.ndarray:
    """Indices with |lambda_i| < eps_p * max lambda (abs guards tiny negative roundoff)."""
    return np.flatnonzero(np.abs(eigvals) < eps_p * np.max(eigvals))


def fit_whiten(
    points: np.ndarray,
    eps_p: float = DEFAULT_EPS_P,
    reduce: bool = True,
    eps_n: float = DEFAULT_EPS_N,
) -> WhitenModel:
    """
    Fit the whitening transform on an (M, N) point array.

    Args:
        points: trajectory states, one per row
        eps_p: relative eigenvalue cutoff for linear conserved quantities
        reduce: drop vanishing directions (True) or keep all with eps_n regularization
        eps_n: regularizer added to sqrt(lambda) when reduce is False
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2:
        raise DimensionMismatchError(f"Expected an (M, N) array, got shape {points.shape}")
    n_samples, dim = points.shape
    if n_samples < dim + 1:
        raise InsufficientDataError(
            f"Need at least N + 1 = {dim + 1} points to whiten {dim}-dimensional data, got {n_samples}"
        )
    if not 0.0 < eps_p < 1.0:
        raise ValueError(f"eps_p must lie in (0, 1), got {eps_p}")

    mean = points.mean(axis=0)
    eigvals, eigvecs = _sorted_covariance_eigh(points - mean)
    if eigvals[0] <= 0:
        raise InsufficientDataError("Data has zero variance in every direction")

    removed = vanishing_indices(eigvals, eps_p)
    removed_set = set(removed.tolist())
    if reduce:
        kept = tuple(i for i in range(dim) if i not in removed_set)
    else:
        kept = tuple(range(dim))

    logger.info(
        "fitted whitening transform",
        extra={"dim": dim, "n_removed": len(removed), "reduce": reduce, "max_eigval": float(eigvals[0])},
    )
    return WhitenModel(
        mean=mean,
        eigvals=eigvals,
        eigvecs=eigvecs,
        kept=kept,
        removed=tuple(int(i) for i in removed),
        eps_p=eps_p,
        eps_n=eps_n,
        reduce=reduce,
    )


def apply_whiten(model: WhitenModel, x: np.ndarray) -> np.ndarray:
    """y_i = e_i . (x - mean) / scale_i over kept i; accepts one state or an (M, N) array."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.input_dim:
        raise DimensionMismatchError(
            f"Whitening model expects dimension {model.input_dim}, got {x.shape[-1]}"
        )
    basis = model.eigvecs[list(model.kept)]
    return ((x - model.mean) @ basis.T) / model.scales


def invert_whiten(model: WhitenModel, y: np.ndarray) -> np.ndarray:
    """Map whitened coordinates back to state space (exact on the kept subspace)."""
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != model.output_dim:
        raise DimensionMismatchError(
            f"Whitened vectors have dimension {model.output_dim}, got {y.shape[-1]}"
        )
    basis = model.eigvecs[list(model.kept)]
    return model.mean + (y * model.scales) @ basis


def linear_conserved_report(model: WhitenModel) -> List[Tuple[np.ndarray, float]]:
    """(e_i, lambda_i) for every vanishing direction: H_i(x) = e_i . x is conserved."""
    return [(model.eigvecs[i].copy(), float(model.eigvals[i])) for i in model.removed]


@dataclass(frozen=True)
class NoiseScanRow:
    sigma: float
    eigvals: np.ndarray


def noise_eigenvalue_scan(
    points: np.ndarray,
    sigmas: Sequence[float],
    rng: Optional[np.random.Generator] = None,
) -> List[NoiseScanRow]:
    """Covariance eigenvalues of points + N(0, sigma^2 I) noise for each sigma."""
    points = np.asarray(points, dtype=float)
    rng = rng if rng is not None else np.random.default_rng(0)
    rows = []
    for sigma in sigmas:
        if sigma < 0:
            raise ValueError(f"Noise level must be non-negative, got {sigma}")
        noisy = points + rng.normal(0.0, sigma, size=points.shape) if sigma > 0 else points
        rows.append(NoiseScanRow(sigma=float(sigma), eigvals=covariance_eigenvalues(noisy)))
    return rows
