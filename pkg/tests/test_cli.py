import argparse
import json
import logging
import os

import pytest

from src.cli.main import EXIT_FAILED, EXIT_OK, EXIT_USAGE, main, parse_param, parse_values

FAST_RUN = """
seed = 1
[system]
name = "harmonic"
n_steps = 300
[pullnet]
steps = 40
batch = 64
hidden = [8, 8]
eval_points = 256
[sampler]
chain_length = 60
stability_points = 3
[erd]
L_values = [0.03, 0.1, 0.3]
"""


@pytest.fixture(autouse=True)
def isolated_run(monkeypatch, tmp_path):
    """Fresh cwd and env, and the root logger restored after main() reconfigures it."""
    for key in list(os.environ):
        if key.upper().startswith("POINCARE_"):
            monkeypatch.delenv(key)
    monkeypatch.chdir(tmp_path)
    root = logging.getLogger()
    handlers, level = list(root.handlers), root.level
    yield
    root.handlers[:] = handlers
    root.setLevel(level)


@pytest.fixture
def fast_config(tmp_path):
    path = tmp_path / "fast.toml"
    path.write_text(FAST_RUN)
    return str(path)


def read_manifest(directory):
    return json.loads((directory / "manifest.json").read_text())


def test_parse_values():
    assert parse_values("5:25:3") == [5.0, 15.0, 25.0]
    assert parse_values("1, 2.5,4") == [1.0, 2.5, 4.0]
    assert parse_values("") == []
    with pytest.raises(argparse.ArgumentTypeError):
        parse_values("1:2")
    with pytest.raises(argparse.ArgumentTypeError):
        parse_values("a,b")


def test_parse_param():
    assert parse_param("eps=0.2") == ("eps", 0.2)
    with pytest.raises(argparse.ArgumentTypeError):
        parse_param("eps")


def test_simulate_writes_trajectory_and_manifest(tmp_path, capsys):
    out = tmp_path / "sim"
    assert main(["simulate", "--system", "harmonic", "--out", str(out)]) == EXIT_OK
    assert len((out / "trajectory.csv").read_text().splitlines()) == 1002
    manifest = read_manifest(out)
    assert manifest["success"] is True
    assert manifest["config"]["system"]["name"] == "harmonic"
    assert len(manifest["config_sha256"]) == 64
    printed = json.loads(capsys.readouterr().out)
    assert printed["result"]["rows"] == 1001


def test_missing_config_file_is_a_usage_error(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "missing.toml")]) == EXIT_USAGE


def test_unknown_parameter_is_a_usage_error():
    assert main(["simulate", "--system", "harmonic", "--param", "eps=0.1"]) == EXIT_USAGE


def test_unknown_method_is_rejected_by_the_parser():
    with pytest.raises(SystemExit) as info:
        main(["baseline", "--method", "bogus"])
    assert info.value.code == 2


def test_empty_scan_values_are_a_usage_error():
    assert main(["scan", "--axis", "pendulum_theta0", "--values", ""]) == EXIT_USAGE
    assert main(["scan"]) == EXIT_USAGE


def test_pca_baseline(tmp_path, fast_config):
    out = tmp_path / "pca"
    assert main(["baseline", "--config", fast_config, "--method", "pca", "--out", str(out)]) == EXIT_OK
    verdict = json.loads((out / "baseline_pca.json").read_text())
    assert verdict["dimension"] == 2
    assert (out / "baseline_pca.csv").exists()


def test_analyze_writes_detection(tmp_path, fast_config):
    out = tmp_path / "analyze"
    assert main(["analyze", "--config", fast_config, "--out", str(out), "--noise-scan"]) == EXIT_OK
    detection = json.loads((out / "detection.json").read_text())
    assert detection["n_linear"] == 0
    assert len(detection["L_grid"]) == 3
    assert detection["config_hash"] == read_manifest(out)["config_sha256"]
    for name in ("whiten.json", "erd.csv", "noise_scan.csv"):
        assert (out / name).exists()


def test_analyze_failure_exits_nonzero(tmp_path, fast_config):
    flat = tmp_path / "flat.csv"
    flat.write_text("t,x0,x1\n" + "".join(f"{i},1,1\n" for i in range(10)))
    out = tmp_path / "flat_run"
    code = main(["analyze", "--config", fast_config, "--trajectory", str(flat), "--out", str(out)])
    assert code == EXIT_FAILED
    manifest = read_manifest(out)
    assert manifest["success"] is False
    assert manifest["failures"][0]["error_type"] == "InsufficientDataError"


def test_export_writes_gauge_fixed_data(tmp_path, fast_config):
    out = tmp_path / "export"
    assert main(["export", "--config", fast_config, "--out", str(out)]) == EXIT_OK
    assert (out / "gauge_fixed.txt").exists()
    assert (out / "gauge_fixed_eval.txt").exists()
    candidates = json.loads((out / "candidates.json").read_text())["candidates"]
    assert candidates[0]["A"]["relative_std"] < 1e-6


def test_export_from_files(tmp_path, fast_config):
    sims = []
    for scale in ("1", "2"):
        sim_dir = tmp_path / f"sim{scale}"
        override = tmp_path / f"x0_{scale}.toml"
        override.write_text(FAST_RUN.replace('name = "harmonic"', f'name = "harmonic"\nx0 = [{scale}.0, 0.0]'))
        assert main(["simulate", "--config", str(override), "--out", str(sim_dir)]) == EXIT_OK
        sims.append(str(sim_dir / "trajectory.csv"))
    out = tmp_path / "export_files"
    assert main(["export", "--config", fast_config, "--trajectory", *sims, "--out", str(out)]) == EXIT_OK
    manifest = json.loads((out / "gauge_fixed.json").read_text())
    assert manifest["rows"] == {"A": 301, "B": 301, "C": 0}


def test_stability_writes_checkpoints(tmp_path, fast_config):
    out = tmp_path / "stability"
    assert main(["stability", "--config", fast_config, "--out", str(out)]) == EXIT_OK
    assert len(list((out / "checkpoints").glob("pull_L*.pt"))) == 3
    summary = json.loads((out / "stability.json").read_text())
    assert summary["n_points"] == 3
    assert summary["ground_truth"] == 1


@pytest.mark.parametrize("reduce, n_linear", [("true", 4), ("false", 0)])
def test_stability_follows_reduce_setting(tmp_path, monkeypatch, reduce, n_linear):
    config = tmp_path / "threebody.toml"
    config.write_text(FAST_RUN.replace('name = "harmonic"', 'name = "threebody"'))
    monkeypatch.setenv("POINCARE_PREPROCESS__REDUCE", reduce)
    out = tmp_path / f"stability_{reduce}"
    assert main(["stability", "--config", str(config), "--out", str(out)]) == EXIT_OK
    summary = json.loads((out / "stability.json").read_text())
    assert summary["n_linear"] == n_linear
    assert summary["ground_truth"] == 6


def test_simulate_perturbed_kepler(tmp_path, monkeypatch):
    monkeypatch.setenv("POINCARE_SYSTEM__N_STEPS", "200")
    out = tmp_path / "kepler"
    assert main(["simulate", "--system", "kepler", "--param", "eps=0.01", "--out", str(out)]) == EXIT_OK
    sidecar = json.loads((out / "trajectory.json").read_text())
    assert sidecar["params"] == {"eps": 0.01}
    assert sidecar["n_points"] == 201
