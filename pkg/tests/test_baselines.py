import numpy as np
import pytest
import torch

from src.analysis.baselines import (
    Autoencoder,
    autoencoder_dim,
    fractal_dim,
    global_pca_dim,
    pca_eigenvalue_report,
)
from src.dynamics.toys import isotropic_gaussian, line_segment, noisy_ellipse, unit_circle, unit_square
from src.models.pullnet import TrainConfig
from src.utils.errors import InsufficientDataError


@pytest.fixture
def tilted_plane(rng):
    uv = rng.standard_normal((3000, 2))
    return uv @ np.array([[1.0, 0.0, 2.0], [0.0, 1.0, -1.0]])


def test_pca_sees_only_the_plane(tilted_plane):
    assert global_pca_dim(tilted_plane) == 2
    report = pca_eigenvalue_report(tilted_plane)
    assert report["dimension"] == 2
    assert report["n_linear"] == 1
    assert sum(report["explained_ratios"]) == pytest.approx(1.0)


def test_pca_cannot_see_curvature():
    assert global_pca_dim(noisy_ellipse(2000, b=0.5)) == 2


def test_pca_report_needs_points():
    with pytest.raises(InsufficientDataError):
        pca_eigenvalue_report(np.zeros((2, 3)))


def test_fractal_dimension_of_segment(rng):
    curve = fractal_dim(line_segment(1000, rng=rng), rng=rng)
    assert curve.slope == pytest.approx(1.0, abs=0.05)
    assert curve.auto_window


def test_fractal_dimension_of_square(rng):
    curve = fractal_dim(unit_square(2000, rng=rng), max_points=2000, rng=rng)
    assert curve.slope == pytest.approx(2.0, abs=0.1)


def test_fractal_explicit_window(rng):
    curve = fractal_dim(line_segment(1000, rng=rng), window=(0.01, 0.1), rng=rng)
    assert not curve.auto_window
    assert curve.slope == pytest.approx(1.0, abs=0.05)
    lo, hi = curve.to_dict()["fit_range_L"]
    assert 0.01 <= lo < hi <= 0.1


def test_fractal_window_without_scales(rng):
    with pytest.raises(InsufficientDataError):
        fractal_dim(line_segment(200, rng=rng), window=(100.0, 200.0), rng=rng)


def test_fractal_rejects_coincident_points():
    with pytest.raises(InsufficientDataError):
        fractal_dim(np.ones((20, 2)))


def test_autoencoder_threshold_picks_smallest_width(rng, tiny_train_config):
    data = isotropic_gaussian(400, 3, rng=rng)
    generous = autoencoder_dim(data, threshold=1e6, cfg=tiny_train_config)
    assert generous.dimension == 1
    assert generous.threshold_met
    assert [s for s, _, _ in generous.curve()] == [1, 2, 3]


def test_autoencoder_reports_N_when_nothing_passes(rng, tiny_train_config):
    data = isotropic_gaussian(400, 3, rng=rng)
    strict = autoencoder_dim(data, s_range=[1, 2], threshold=0.0, cfg=tiny_train_config)
    assert strict.dimension == 3
    assert not strict.threshold_met


def test_autoencoder_width_range(rng, tiny_train_config):
    with pytest.raises(ValueError):
        autoencoder_dim(isotropic_gaussian(50, 2, rng=rng), s_range=[3], cfg=tiny_train_config)


def test_fractal_slope_ignores_global_scale(rng):
    points = line_segment(800, rng=rng)
    small = fractal_dim(points, rng=np.random.default_rng(1))
    large = fractal_dim(10.0 * points, rng=np.random.default_rng(1))
    assert large.slope == pytest.approx(small.slope, abs=0.02)


def test_fractal_dimension_of_circle(rng):
    curve = fractal_dim(unit_circle(1000, rng=rng, random_phase=True), rng=rng)
    assert curve.slope == pytest.approx(1.0, abs=0.1)


def test_widened_autoencoder_computes_the_same_map():
    narrow = Autoencoder(3, 1, width=8, seed=2).double()
    wide = narrow.widened(3, seed=9)
    x = torch.randn(10, 3, dtype=torch.float64)
    with torch.no_grad():
        torch.testing.assert_close(wide(x), narrow(x), rtol=0.0, atol=0.0)
    with pytest.raises(ValueError):
        wide.widened(2, seed=0)


def test_autoencoder_error_never_rises_with_width(rng):
    cfg = TrainConfig(steps=30, batch=64, hidden=(8, 8), eval_points=256, lr=3e-2, seed=5)
    report = autoencoder_dim(noisy_ellipse(400, b=0.5, noise=0.05, rng=rng), threshold=1e-9, cfg=cfg)
    errors = [e for _, _, e in report.curve()]
    assert all(b <= a for a, b in zip(errors[:-1], errors[1:]))
    assert report.is_monotone()
    assert report.source[1] == "fresh"
    assert report.source[2] in ("fresh", "warm_start", "carried")


def test_autoencoder_rejects_zero_restarts(rng, tiny_train_config):
    with pytest.raises(ValueError):
        autoencoder_dim(isotropic_gaussian(50, 2, rng=rng), restarts=0, cfg=tiny_train_config)
