import numpy as np
import pytest

from src.analysis import erd as erd_module
from src.analysis.erd import (
    ExplainedRatioDiagram,
    build_erd,
    default_L_grid,
    detect,
    local_pca,
    n_eff_of_ratios,
    transition_scales,
    transition_sharpness,
)
from src.utils.errors import InsufficientDataError, TrainingDivergenceError


@pytest.fixture
def synthetic_erd():
    """Two components, one collapsing in the middle of a five-point grid."""
    return ExplainedRatioDiagram(
        L_grid=np.logspace(-2, 0, 5),
        ratios=np.array([[0.5, 0.9, 1.0, 0.8, 0.5],
                         [0.5, 0.1, 0.0, 0.2, 0.5]]),
        n_eff_curve=np.array([0.0, 0.9, 1.0, 0.4, 0.0]),
        N=2,
        n_eff_std=np.zeros(5),
    )


@pytest.fixture
def circle():
    t = np.linspace(0, 2 * np.pi, 2000, endpoint=False)
    return np.sqrt(2.0) * np.column_stack([np.cos(t), np.sin(t)])


def test_default_grid_contains_reference_scale():
    assert np.any(np.isclose(default_L_grid(), 0.1))
    grid = default_L_grid(-2.0, 0.0, 4)
    assert len(grid) == 5
    assert np.any(np.isclose(grid, 0.1))
    assert np.all(np.diff(grid) > 0)


def test_local_pca_ratios_sum_to_one(rng):
    ratios = local_pca(rng.standard_normal((5000, 3)) * [3.0, 1.0, 0.1])
    assert ratios.sum() == pytest.approx(1.0)
    assert np.all(np.diff(ratios) <= 0)
    assert ratios[0] > 0.85


def test_local_pca_of_a_single_point():
    np.testing.assert_array_equal(local_pca(np.ones((50, 3))), np.zeros(3))
    assert n_eff_of_ratios(np.zeros(3), 3) == 3.0


@pytest.mark.parametrize(
    "ratios,expected",
    [
        ([1.0, 0.0], 1.0),
        ([0.5, 0.5], 0.0),
        ([1 / 3, 1 / 3, 1 / 3], 0.0),
        ([0.9, 0.1 / 3, 0.2 / 3], np.cos(0.1 * np.pi) + np.cos(0.2 * np.pi)),
    ],
)
def test_n_eff_of_ratios(ratios, expected):
    assert n_eff_of_ratios(ratios, len(ratios)) == pytest.approx(expected)


def test_detect_both_rules(synthetic_erd):
    result = detect(synthetic_erd, n_linear=2)
    assert result.n_detected_threshold == 1
    assert result.n_eff_max == 1.0
    assert result.best_L == pytest.approx(0.1)
    assert result.n_total == 3
    assert result.n_nonlinear == 1
    assert result.margins[1] == pytest.approx(-0.05)
    assert detect(synthetic_erd, n_linear=2, mode="threshold").n_total == 3


def test_transition_scales_and_sharpness(synthetic_erd):
    L_a, L_b = transition_scales(synthetic_erd)
    assert L_a == pytest.approx(10 ** -1.5)
    assert L_b == pytest.approx(10 ** -0.5)
    assert transition_sharpness(synthetic_erd) == pytest.approx(1.2)


def test_detect_rejects_unknown_mode(synthetic_erd):
    with pytest.raises(ValueError):
        detect(synthetic_erd, mode="bogus")


def test_detect_needs_three_columns(synthetic_erd):
    synthetic_erd.n_eff_curve[:3] = np.nan
    with pytest.raises(InsufficientDataError):
        detect(synthetic_erd)


def test_build_erd_same_result_in_parallel(circle, tiny_train_config):
    kwargs = dict(L_grid=[0.03, 0.1, 0.3], cfg=tiny_train_config, chain_length=200, root_seed=11)
    serial = build_erd(circle, jobs=1, **kwargs)
    parallel = build_erd(circle, jobs=2, **kwargs)
    assert serial.ratios.shape == (2, 3)
    np.testing.assert_allclose(serial.ratios, parallel.ratios, rtol=1e-12)
    np.testing.assert_allclose(serial.n_eff_curve, parallel.n_eff_curve, rtol=1e-12)
    assert not serial.failed


def test_multi_chain_curve_agrees_with_stored_ratios(circle, tiny_train_config):
    diagram = build_erd(circle, [0.03, 0.1, 0.3], tiny_train_config, chain_length=150, n_chains=3, root_seed=4)
    for j in range(len(diagram.L_grid)):
        assert diagram.ratios[:, j].sum() == pytest.approx(1.0)
        assert diagram.n_eff_curve[j] == pytest.approx(n_eff_of_ratios(diagram.ratios[:, j], diagram.N))
    assert np.all(diagram.n_eff_std >= 0.0)


def test_build_erd_keeps_going_after_failed_column(circle, tiny_train_config, monkeypatch):
    original = erd_module._erd_column

    def flaky(points, L, *args):
        if np.isclose(L, 0.1):
            raise TrainingDivergenceError("loss became nan", step=3)
        return original(points, L, *args)

    monkeypatch.setattr(erd_module, "_erd_column", flaky)
    diagram = build_erd(circle, [0.03, 0.1, 0.3], tiny_train_config, chain_length=100)
    assert list(diagram.failed) == [0.1]
    assert np.isnan(diagram.n_eff_curve[1])
    assert np.all(np.isfinite(diagram.n_eff_curve[[0, 2]]))


def test_build_erd_needs_points(tiny_train_config):
    with pytest.raises(InsufficientDataError):
        build_erd(np.zeros((1, 2)), [0.1], tiny_train_config)


def test_n_eff_worked_example():
    assert n_eff_of_ratios([0.5, 0.45, 0.05, 0.0], 4) == pytest.approx(1.0 + np.cos(0.2 * np.pi))


def test_n_eff_matches_scalar_evaluation(rng):
    for _ in range(10_000):
        N = int(rng.integers(1, 13))
        ratios = rng.dirichlet(np.full(N, 0.3))
        expected = 0.0
        for w in ratios:
            x = np.pi * N * w
            expected += np.cos(x) if x < np.pi / 2 else 0.0
        assert abs(n_eff_of_ratios(ratios, N) - expected) < 1e-12
