import json

import numpy as np
import pytest

from src.dynamics.integrator import Trajectory, simulate
from src.dynamics.systems import SystemName, default_initial_state, make_system
from src.tools.export_tool import export_gauge_fixed, load_gauge_fixed
from src.tools.formula_tool import (
    argument_names,
    evaluate_candidate,
    evaluate_formula,
    ground_truth_formulas,
    parse_formula,
)
from src.tools.trajectory_io import load_trajectory, save_trajectory, sidecar_path
from src.utils.errors import FormulaError, IndistinguishableTargetsError, MixedSystemError


def harmonic(scale=1.0, n_steps=300):
    return simulate(make_system("harmonic"), [scale, 0.0], 1e-2, n_steps)


class TestGaugeFixedExport:
    def test_writes_table_eval_file_and_manifest(self, tmp_path):
        a, b, c = harmonic(1.0), harmonic(1.5), harmonic(1.25, n_steps=50)
        out = export_gauge_fixed(a, b, c, tmp_path / "gauge_fixed.txt")
        assert out["rows"] == {"A": 301, "B": 301, "C": 51}

        states, targets = load_gauge_fixed(out["data"])
        assert states.shape == (602, 2)
        np.testing.assert_array_equal(states[:301], a.points)
        np.testing.assert_array_equal(states[301:], b.points)
        assert set(targets[:301]) == {1.0} and set(targets[301:]) == {2.0}
        assert np.loadtxt(out["eval"]).shape == (51, 2)

        manifest = json.loads((tmp_path / "gauge_fixed.json").read_text())
        assert manifest["columns"] == ["x", "v", "target"]
        assert manifest["system"] == "harmonic"
        assert manifest["eval_file"] == "gauge_fixed_eval.txt"

    def test_affine_fit_recovers_energy(self, tmp_path):
        out = export_gauge_fixed(harmonic(1.0), harmonic(1.5), None, tmp_path / "g.txt")
        states, targets = load_gauge_fixed(out["data"])
        design = np.column_stack([np.ones(len(states)), states[:, 0] ** 2, states[:, 1] ** 2])
        (_, c, d), *_ = np.linalg.lstsq(design, targets, rcond=None)
        assert abs(c / d - 1.0) < 0.03
        assert out["eval"] is None

    def test_rejects_mixed_systems(self, tmp_path):
        kepler = simulate(make_system("kepler"), [1.0, 0.0, 0.0, 1.2], 1e-2, 10)
        with pytest.raises(MixedSystemError):
            export_gauge_fixed(harmonic(), kepler, None, tmp_path / "g.txt")
        other_eps = simulate(make_system("kepler", eps=0.1), [1.0, 0.0, 0.0, 1.2], 1e-2, 10)
        with pytest.raises(MixedSystemError):
            export_gauge_fixed(kepler, other_eps, None, tmp_path / "g.txt")

    def test_rejects_identical_inputs_or_targets(self, tmp_path):
        with pytest.raises(IndistinguishableTargetsError):
            export_gauge_fixed(harmonic(), harmonic(), None, tmp_path / "g.txt")
        with pytest.raises(IndistinguishableTargetsError):
            export_gauge_fixed(harmonic(1.0), harmonic(1.5), None, tmp_path / "g.txt", targets=(1.0, 1.0))


class TestFormulas:
    def test_labels_and_generic_names_agree(self, harmonic_trajectory):
        by_label = evaluate_formula("x**2 + v**2", harmonic_trajectory.points, ("x", "v"))
        by_index = evaluate_formula("x0**2 + x1**2", harmonic_trajectory.points, ("x", "v"))
        np.testing.assert_allclose(by_label, by_index)

    def test_generic_aliases_skipped_when_labels_collide(self):
        labels = make_system("threebody").labels
        assert argument_names(labels) == list(labels)

    def test_energy_candidate_is_conserved(self, harmonic_trajectory):
        stats = evaluate_candidate("(x**2 + v**2)/2", harmonic_trajectory)
        assert stats.mean == pytest.approx(0.5)
        assert stats.relative_std < 1e-8
        assert stats.n_excluded == 0

    def test_undefined_rows_are_excluded(self):
        traj = simulate(make_system("harmonic"), [0.0, 1.0], 1e-2, 100)
        stats = evaluate_candidate("1/x", traj)
        assert stats.n_excluded == 1
        assert stats.n_used == 100

    def test_formula_undefined_everywhere(self):
        traj = simulate(make_system("harmonic"), [0.0, 0.0], 1e-2, 10)
        with pytest.raises(FormulaError):
            evaluate_candidate("1/x", traj)

    @pytest.mark.parametrize("formula", ["x +* v", "energy(x)", "q**2"])
    def test_bad_formulas(self, formula):
        with pytest.raises(FormulaError):
            parse_formula(formula, ("x", "v"))

    def test_constant_formula_broadcasts(self, harmonic_trajectory):
        assert evaluate_formula("2", harmonic_trajectory.points, ("x", "v")).shape == (1001,)

    def test_generic_names_without_system(self):
        traj = Trajectory(system=None, x0=np.zeros(2), dt=1.0, points=np.ones((4, 2)), times=np.arange(4.0))
        assert evaluate_candidate("x0 + x1", traj).mean == 2.0


@pytest.mark.parametrize("name", SystemName.ALL)
def test_ground_truth_formulas_are_conserved(name):
    traj = simulate(make_system(name), default_initial_state(name), 1e-3, 3000)
    formulas = ground_truth_formulas(name)
    assert formulas
    for formula in formulas:
        stats = evaluate_candidate(formula.expression, traj)
        if formula.approximate:
            continue
        assert stats.std <= 1e-6 * max(1.0, abs(stats.mean)), formula.name


def test_ground_truth_unknown_system():
    with pytest.raises(ValueError):
        ground_truth_formulas("quartic")


class TestTrajectoryFiles:
    def test_round_trip_is_bitwise(self, tmp_path, kepler_trajectory):
        out = save_trajectory(kepler_trajectory, tmp_path / "trajectory.csv", seed=4)
        assert out["rows"] == 2001
        loaded = load_trajectory(out["csv"])
        np.testing.assert_array_equal(loaded.points, kepler_trajectory.points)
        np.testing.assert_array_equal(loaded.times, kepler_trajectory.times)
        assert loaded.system.name == "kepler"
        assert loaded.dt == 1e-2
        assert json.loads(sidecar_path(out["csv"]).read_text())["seed"] == 4

    def test_header_row(self, tmp_path, harmonic_trajectory):
        save_trajectory(harmonic_trajectory, tmp_path / "h.csv")
        assert (tmp_path / "h.csv").read_text().splitlines()[0] == "t,x0,x1"

    def test_missing_sidecar_means_no_system(self, tmp_path, harmonic_trajectory):
        out = save_trajectory(harmonic_trajectory, tmp_path / "h.csv")
        sidecar_path(out["csv"]).unlink()
        loaded = load_trajectory(out["csv"])
        assert loaded.system is None
        assert loaded.dt == pytest.approx(1e-2)

    def test_bare_state_table(self, tmp_path):
        path = tmp_path / "bare.csv"
        path.write_text("1.0,2.0\n3.0,4.0\n5.0,6.0\n")
        loaded = load_trajectory(path)
        assert loaded.points.shape == (3, 2)
        np.testing.assert_array_equal(loaded.times, [0.0, 1.0, 2.0])

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_trajectory(tmp_path / "nope.csv")
