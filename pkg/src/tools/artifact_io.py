"""
Writers (and a few readers) for every analysis artifact.

CSV files are plot-ready long-form tables; JSON files carry verdicts and
provenance. All writers create parent directories and return the path written.
"""
import csv
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
import torch

from src.analysis.baselines import AutoencoderReport, FractalCurve
from src.analysis.erd import DetectionResult, ExplainedRatioDiagram
from src.analysis.preprocess import NoiseScanRow, WhitenModel
from src.models.pullnet import PullNetwork
from src.orchestration.scan import ScanResult
from src.sampling.sampler import SampleCloud, StabilityReport

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def _prepare(path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _to_jsonable(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def write_json(data: Dict[str, Any], path: PathLike) -> str:
    path = _prepare(path)
    path.write_text(json.dumps(data, indent=2, default=_to_jsonable))
    return str(path)


def write_csv(header: Sequence[str], rows: Iterable[Sequence[Any]], path: PathLike) -> str:
    path = _prepare(path)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for row in rows:
            writer.writerow([f"{v:.17g}" if isinstance(v, float) else v for v in row])
    return str(path)


# ---------------------------------------------------------------------------
# Preprocessing and networks


def save_whiten_model(model: WhitenModel, path: PathLike) -> str:
    return write_json(model.to_dict(), path)


def load_whiten_model(path: PathLike) -> WhitenModel:
    return WhitenModel.from_dict(json.loads(Path(path).read_text()))


def write_noise_scan(rows: Sequence[NoiseScanRow], path: PathLike) -> str:
    """Long form: sigma, i, eigenvalue."""
    return write_csv(
        ["sigma", "i", "eigenvalue"],
        ([row.sigma, i, float(lam)] for row in rows for i, lam in enumerate(row.eigvals)),
        path,
    )


def save_checkpoint(net: PullNetwork, path: PathLike) -> str:
    path = _prepare(path)
    torch.save({"state_dict": net.state_dict(), "metadata": net.metadata()}, path)
    return str(path)


def load_checkpoint(path: PathLike) -> PullNetwork:
    payload = torch.load(path, map_location="cpu")
    meta = payload["metadata"]
    widths = meta["widths"]
    net = PullNetwork(
        widths[0], widths[1:-1], meta["activation"], L=meta["L"], seed=meta["seed"], dtype=meta["dtype"]
    )
    net.load_state_dict(payload["state_dict"])
    net.train_loss, net.test_loss = meta.get("train_loss"), meta.get("test_loss")
    net.eval()
    return net


# ---------------------------------------------------------------------------
# ERD, detection, chains


def write_erd_csv(erd: ExplainedRatioDiagram, path: PathLike) -> str:
    """Columns L, i, omega, n_eff_at_L; failed scales appear with NaN values."""
    rows = (
        [float(L), i, float(erd.ratios[i, j]), float(erd.n_eff_curve[j])]
        for j, L in enumerate(erd.L_grid)
        for i in range(erd.N)
    )
    return write_csv(["L", "i", "omega", "n_eff_at_L"], rows, path)


def write_detection_json(
    detection: DetectionResult,
    erd: ExplainedRatioDiagram,
    path: PathLike,
    config_hash: Optional[str] = None,
) -> str:
    data = detection.to_dict()
    data.update({
        "L_grid": erd.L_grid.tolist(),
        "n_eff_curve": [None if not np.isfinite(v) else float(v) for v in erd.n_eff_curve],
        "losses": {f"{L:.6g}": list(pair) for L, pair in erd.losses.items()},
        "failed_scales": {f"{L:.6g}": msg for L, msg in erd.failed.items()},
        "config_hash": config_hash,
    })
    return write_json(data, path)


def write_sample_cloud(cloud: SampleCloud, path: PathLike) -> List[str]:
    """Samples as CSV plus a metadata JSON next to it."""
    csv_path = write_csv(
        [f"x{i}" for i in range(cloud.samples.shape[1])],
        (row.tolist() for row in cloud.samples),
        path,
    )
    meta_path = write_json(cloud.metadata(), Path(path).with_suffix(".json"))
    return [csv_path, meta_path]


def write_stability(report: StabilityReport, path: PathLike, ground_truth: Optional[int] = None) -> List[str]:
    csv_path = write_csv(
        ["start_index", "n_eff", "total", "best_L"],
        ([int(s), float(n), float(t), float(L)]
         for s, n, t, L in zip(report.start_indices, report.n_eff, report.totals, report.best_L)),
        path,
    )
    summary = report.summary()
    if ground_truth is not None:
        summary["ground_truth"] = ground_truth
        summary["fraction_correct"] = report.fraction_correct(ground_truth)
    return [csv_path, write_json(summary, Path(path).with_suffix(".json"))]


# ---------------------------------------------------------------------------
# Scans and baselines


def write_scan_csv(result: ScanResult, path: PathLike) -> str:
    """1D scans: axis_value, n_eff_mean, n_eff_std, rounded. Kepler grid: eps, orbits, n_eff."""
    if result.is_grid():
        rows = ([p.value, p.orbits, p.n_eff_mean] for p in result.points)
        return write_csv(["eps", "orbits", "n_eff"], rows, path)
    rows = ([p.value, p.n_eff_mean, p.n_eff_std, "" if p.rounded is None else p.rounded] for p in result.points)
    return write_csv(["axis_value", "n_eff_mean", "n_eff_std", "rounded"], rows, path)


def write_scan_summary(result: ScanResult, path: PathLike, extra: Optional[Dict[str, Any]] = None) -> str:
    data = {
        "axis": result.axis,
        "system": result.system,
        "n_values": len(result.points),
        "transitions": result.transitions,
        "failures": {f"{v:.10g}": msg for v, msg in result.failures.items()},
        "notes": result.notes,
    }
    data.update(extra or {})
    return write_json(data, path)


def write_autoencoder(report: AutoencoderReport, stem: PathLike) -> List[str]:
    csv_path = write_csv(["s", "train_error", "test_error"], ([s, tr, te] for s, tr, te in report.curve()), f"{stem}.csv")
    verdict = {
        "method": "autoencoder",
        "dimension": report.dimension,
        "threshold": report.threshold,
        "threshold_met": report.threshold_met,
    }
    return [csv_path, write_json(verdict, f"{stem}.json")]


def write_fractal(curve: FractalCurve, stem: PathLike, dim: Optional[int] = None) -> List[str]:
    csv_path = write_csv(
        ["log_L", "log_pairs"],
        ([float(a), float(b)] for a, b in zip(curve.log_L, curve.log_pairs)),
        f"{stem}.csv",
    )
    verdict = {"method": "fractal", **curve.to_dict()}
    if dim is not None:
        verdict["n_conserved"] = dim - int(round(curve.slope))
    return [csv_path, write_json(verdict, f"{stem}.json")]


def write_pca(report: Dict[str, Any], stem: PathLike) -> List[str]:
    csv_path = write_csv(
        ["i", "eigenvalue", "explained_ratio"],
        ([i, lam, ratio] for i, (lam, ratio) in enumerate(zip(report["eigenvalues"], report["explained_ratios"]))),
        f"{stem}.csv",
    )
    return [csv_path, write_json({"method": "pca", **report}, f"{stem}.json")]
