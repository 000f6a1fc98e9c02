import numpy as np

from src.dynamics.toys import unit_circle
from src.orchestration.pipeline_graph import route_on_error, run_pipeline


def test_pipeline_produces_result_report(tiny_train_config):
    points = np.column_stack([unit_circle(1000), np.full(1000, 3.0)])
    state = run_pipeline(points, tiny_train_config, L_grid=[0.03, 0.1, 0.3], chain_length=100, root_seed=2)
    report = state["report"]
    assert report["type"] == "result"
    assert report["detection"]["n_linear"] == 1
    assert len(report["linear_conserved"]) == 1
    assert state["whitened"].shape == (1000, 2)
    for event in ("whiten_start", "erd_start", "detect_start", "format_report_complete"):
        assert event in state["trace"]


def test_pipeline_without_reduction_reports_no_linear_count(tiny_train_config):
    points = np.column_stack([unit_circle(500), np.full(500, 3.0)])
    state = run_pipeline(points, tiny_train_config, L_grid=[0.03, 0.1, 0.3], chain_length=50, reduce=False)
    assert state["report"]["detection"]["n_linear"] == 0
    assert state["whitened"].shape == (500, 3)


def test_pipeline_stops_at_failed_stage(tiny_train_config):
    state = run_pipeline(np.ones((50, 2)), tiny_train_config, L_grid=[0.1, 0.2, 0.3])
    report = state["report"]
    assert report["type"] == "error"
    assert report["error_type"] == "InsufficientDataError"
    assert "whiten_error" in state["trace"]
    assert "erd_start" not in state["trace"]
    assert state["erd"] is None


def test_detection_failure_is_reported(tiny_train_config):
    state = run_pipeline(unit_circle(200), tiny_train_config, L_grid=[0.1], chain_length=20)
    assert state["report"]["type"] == "error"
    assert "detect_error" in state["trace"]


def test_route_on_error():
    assert route_on_error({"error": "boom"}) == "error"
    assert route_on_error({"error": None}) == "continue"
