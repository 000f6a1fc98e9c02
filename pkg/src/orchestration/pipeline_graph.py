"""
LangGraph orchestration of the analysis pipeline.

Flow:
START → whiten → [error?] → erd → [error?] → detect → format_report → END

Each node reads from and writes to the shared PipelineState and appends to
its `trace`, so a failed run still reports how far it got.
"""
import logging
from typing import Any, Dict, List, Literal, Optional, Sequence, TypedDict

import numpy as np
from langgraph.graph import END, StateGraph

from src.analysis.erd import build_erd, default_L_grid, detect
from src.analysis.preprocess import apply_whiten, fit_whiten, linear_conserved_report
from src.models.pullnet import TrainConfig
from src.utils.errors import PoincareError

logger = logging.getLogger(__name__)


class PipelineState(TypedDict):
    """State object passed through the pipeline graph."""
    # Input
    points: np.ndarray
    L_grid: List[float]
    train_config: TrainConfig
    eps_p: float
    eps_n: float
    reduce: bool
    chain_length: int
    start_index: Optional[int]
    n_chains: int
    detection_mode: str
    root_seed: int
    jobs: int

    # Processing
    whiten_model: Optional[Any]
    whitened: Optional[np.ndarray]
    erd: Optional[Any]
    detection: Optional[Any]

    # Output
    report: Optional[Dict[str, Any]]
    error: Optional[str]
    error_type: Optional[str]
    trace: list


def _fail(state: PipelineState, stage: str, error: Exception) -> PipelineState:
    state['error'] = f"{stage} failed: {error}"
    state['error_type'] = type(error).__name__
    state['trace'].append(f'{stage}_error')
    logger.error("pipeline stage failed", extra={"stage": stage, "error": str(error)})
    return state


def whiten_node(state: PipelineState) -> PipelineState:
    """Node 1: fit the whitening transform and count linear conserved quantities."""
    state['trace'].append('whiten_start')
    try:
        model = fit_whiten(state['points'], eps_p=state['eps_p'], reduce=state['reduce'], eps_n=state['eps_n'])
        state['whiten_model'] = model
        state['whitened'] = apply_whiten(model, state['points'])
        state['trace'].append(f'whiten_complete_n_linear_{model.n_linear}_dim_{model.output_dim}')
    except (PoincareError, ValueError) as e:
        return _fail(state, 'whiten', e)
    return state


def erd_node(state: PipelineState) -> PipelineState:
    """Node 2: train one pull network per L and collect local PCA ratios."""
    state['trace'].append('erd_start')
    try:
        erd = build_erd(
            state['whitened'],
            state['L_grid'],
            state['train_config'],
            chain_length=state['chain_length'],
            start_index=state['start_index'],
            n_chains=state['n_chains'],
            root_seed=state['root_seed'],
            jobs=state['jobs'],
        )
        state['erd'] = erd
        state['trace'].append(f'erd_complete_failed_columns_{len(erd.failed)}')
    except (PoincareError, ValueError) as e:
        return _fail(state, 'erd', e)
    return state


def detect_node(state: PipelineState) -> PipelineState:
    """Node 3: both detection rules plus the linear count from whitening."""
    state['trace'].append('detect_start')
    try:
        n_linear = state['whiten_model'].n_linear if state['reduce'] else 0
        detection = detect(state['erd'], n_linear=n_linear, mode=state['detection_mode'])
        state['detection'] = detection
        state['trace'].append(f'detect_complete_n_total_{detection.n_total}')
    except (PoincareError, ValueError) as e:
        return _fail(state, 'detect', e)
    return state


def format_report_node(state: PipelineState) -> PipelineState:
    """Node 4: structured report for the CLI and artifact writers."""
    state['trace'].append('format_report_start')
    if state.get('error'):
        state['report'] = {
            'type': 'error',
            'error': state['error'],
            'error_type': state.get('error_type'),
            'trace': state['trace'],
        }
        return state

    model = state['whiten_model']
    state['report'] = {
        'type': 'result',
        'detection': state['detection'].to_dict(),
        'linear_conserved': [
            {'direction': vec.tolist(), 'eigenvalue': lam} for vec, lam in linear_conserved_report(model)
        ],
        'failed_scales': state['erd'].failed,
        'trace': state['trace'],
    }
    state['trace'].append('format_report_complete')
    return state


def route_on_error(state: PipelineState) -> Literal["error", "continue"]:
    """Skip to formatting as soon as a stage has failed."""
    return "error" if state.get('error') else "continue"


def build_pipeline_graph():
    """
    Build the analysis graph.

    START → whiten → erd → detect → format_report → END, with every stage
    able to jump straight to format_report on error.
    """
    workflow = StateGraph(PipelineState)

    workflow.add_node("whiten", whiten_node)
    workflow.add_node("erd_stage", erd_node)
    workflow.add_node("detect", detect_node)
    workflow.add_node("format_report", format_report_node)

    workflow.set_entry_point("whiten")
    workflow.add_conditional_edges("whiten", route_on_error, {"error": "format_report", "continue": "erd_stage"})
    workflow.add_conditional_edges("erd_stage", route_on_error, {"error": "format_report", "continue": "detect"})
    workflow.add_edge("detect", "format_report")
    workflow.add_edge("format_report", END)

    return workflow.compile()


pipeline_graph = build_pipeline_graph()


def run_pipeline(
    points: np.ndarray,
    train_config: Optional[TrainConfig] = None,
    L_grid: Optional[Sequence[float]] = None,
    eps_p: float = 1e-3,
    eps_n: float = 1e-3,
    reduce: bool = True,
    chain_length: int = 1000,
    start_index: Optional[int] = None,
    n_chains: int = 1,
    detection_mode: str = "neff",
    root_seed: int = 0,
    jobs: int = 1,
) -> Dict[str, Any]:
    """
    Run the full analysis on raw trajectory points.

    Returns the final state: `report` for output, plus the intermediate
    whitening model, ERD and detection for artifact writers.
    """
    initial_state: PipelineState = {
        'points': np.asarray(points, dtype=float),
        'L_grid': [float(L) for L in (L_grid if L_grid is not None else default_L_grid())],
        'train_config': train_config or TrainConfig(),
        'eps_p': eps_p,
        'eps_n': eps_n,
        'reduce': reduce,
        'chain_length': chain_length,
        'start_index': start_index,
        'n_chains': n_chains,
        'detection_mode': detection_mode,
        'root_seed': root_seed,
        'jobs': jobs,
        'whiten_model': None,
        'whitened': None,
        'erd': None,
        'detection': None,
        'report': None,
        'error': None,
        'error_type': None,
        'trace': ['pipeline_start'],
    }
    return pipeline_graph.invoke(initial_state)
