import json
import logging

import numpy as np
import pytest

from src.models.pullnet import PullNetwork, pull
from src.state.run_manager import MANIFEST_NAME, RunManager, config_hash
from src.tools.artifact_io import load_checkpoint, save_checkpoint
from src.utils.errors import RunawayChainError
from src.utils.logging_setup import JsonFormatter
from src.utils.seeding import derive_seed, make_rng


def test_config_hash_ignores_key_order():
    assert config_hash({"a": 1, "b": {"c": 2}}) == config_hash({"b": {"c": 2}, "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})


def test_run_lifecycle_writes_manifest(tmp_path):
    manager = RunManager()
    run_id = manager.create_run("analyze", {"seed": 3}, 3, str(tmp_path))
    manager.add_artifact(run_id, str(tmp_path / "erd.csv"), None)
    manager.add_trace(run_id, "whiten_start")
    manager.set_result(run_id, "summary", {"n_total": 1})
    path = manager.finish(run_id)

    manifest = json.loads((tmp_path / MANIFEST_NAME).read_text())
    assert path.endswith(MANIFEST_NAME)
    assert manifest["success"] is True
    assert manifest["artifacts"] == [str(tmp_path / "erd.csv")]
    assert manifest["trace"] == ["analyze_start", "whiten_start", "analyze_complete"]
    assert set(manifest["versions"]) >= {"python", "numpy", "torch"}
    assert manager.get_run(run_id) is None


def test_failures_mark_run_failed(tmp_path):
    manager = RunManager()
    run_id = manager.create_run("scan", {}, 0, str(tmp_path))
    manager.add_failure(run_id, "scan_value_1", RunawayChainError(step=4, norm=2e3))
    manager.finish(run_id)
    manifest = json.loads((tmp_path / MANIFEST_NAME).read_text())
    assert manifest["success"] is False
    assert manifest["failures"][0]["error_type"] == "RunawayChainError"


def test_unknown_run():
    with pytest.raises(ValueError):
        RunManager().add_trace("missing", "x")


def test_checkpoint_round_trip(tmp_path):
    net = PullNetwork(3, (8,), L=0.2, seed=6)
    net.train_loss, net.test_loss = 0.1, 0.2
    restored = load_checkpoint(save_checkpoint(net, tmp_path / "pull.pt"))
    y = np.random.default_rng(0).standard_normal((5, 3))
    np.testing.assert_array_equal(pull(restored, y), pull(net, y))
    assert restored.L == 0.2
    assert restored.test_loss == 0.2


def test_seeds_depend_only_on_keys():
    assert derive_seed(0, "train", "0.1") == derive_seed(0, "train", "0.1")
    assert derive_seed(0, "train", "0.1") != derive_seed(0, "train", "0.3")
    assert derive_seed(0, "chain", 1) != derive_seed(1, "chain", 1)
    np.testing.assert_array_equal(make_rng(5, "a").random(3), make_rng(5, "a").random(3))


def test_json_formatter_merges_extras():
    record = logging.LogRecord("src.analysis.erd", logging.INFO, __file__, 1, "built diagram", None, None)
    record.n_scales = 13
    payload = json.loads(JsonFormatter().format(record))
    assert payload["message"] == "built diagram"
    assert payload["level"] == "INFO"
    assert payload["n_scales"] == 13
