"""
Command Executor: runs one CLI command against a resolved RunConfig.

Key responsibilities:
1. Route the command to its handler
2. Write every artifact into the output directory
3. Record artifacts, failures and the execution trace in the run manifest
4. Return a structured result instead of raising, so the CLI can map it to
   an exit code
"""
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from src.analysis.baselines import autoencoder_dim, fractal_dim, pca_eigenvalue_report
from src.analysis.preprocess import apply_whiten, fit_whiten, noise_eigenvalue_scan
from src.dynamics.integrator import Trajectory, energy_drift, simulate
from src.dynamics.systems import make_system
from src.models.pullnet import train_pull
from src.orchestration.pipeline_graph import run_pipeline
from src.orchestration.scan import crossings, kepler_breakdown_slope, maximize_neff, run_scan
from src.sampling.sampler import midpoint_index, stability_sweep, walk_pull_chain
from src.state.run_manager import run_manager
from src.tools import artifact_io
from src.tools.export_tool import export_gauge_fixed
from src.tools.formula_tool import evaluate_candidate, ground_truth_formulas
from src.tools.trajectory_io import load_trajectory, save_trajectory
from src.utils.config import RunConfig
from src.utils.errors import InsufficientDataError, NoMaximumFoundError, PoincareError
from src.utils.seeding import derive_seed, make_rng

logger = logging.getLogger(__name__)


class CommandType:
    """Supported commands."""
    SIMULATE = "simulate"
    ANALYZE = "analyze"
    SCAN = "scan"
    BASELINE = "baseline"
    EXPORT = "export"
    STABILITY = "stability"

    ALL = (SIMULATE, ANALYZE, SCAN, BASELINE, EXPORT, STABILITY)


class CommandExecutor:
    """
    Executes commands and collects their artifacts.

    Each handler returns a result dict; artifacts go through run_manager so
    the manifest lists exactly what was written.
    """

    def execute(
        self,
        command: str,
        cfg: RunConfig,
        trajectories: Optional[Sequence[str]] = None,
        noise_scan: bool = False,
    ) -> Dict[str, Any]:
        """
        Returns:
            {
                'success': bool,
                'command': str,
                'result': Any,
                'artifacts': List[str],
                'manifest': str,
                'error': str or None,
                'error_type': str or None
            }
        """
        if command not in CommandType.ALL:
            return {
                'success': False, 'command': command, 'result': None, 'artifacts': [],
                'manifest': None, 'error': f'Unknown command: {command}', 'error_type': 'ValueError',
            }

        out = Path(cfg.out_dir)
        run_id = run_manager.create_run(command, cfg.dump(), cfg.seed, str(out))
        handlers = {
            CommandType.SIMULATE: lambda: self._simulate(run_id, cfg, out),
            CommandType.ANALYZE: lambda: self._analyze(run_id, cfg, out, trajectories, noise_scan),
            CommandType.SCAN: lambda: self._scan(run_id, cfg, out),
            CommandType.BASELINE: lambda: self._baseline(run_id, cfg, out, trajectories),
            CommandType.EXPORT: lambda: self._export(run_id, cfg, out, trajectories),
            CommandType.STABILITY: lambda: self._stability(run_id, cfg, out, trajectories),
        }

        result = None
        try:
            result = handlers[command]()
        except (PoincareError, ValueError, FileNotFoundError) as e:
            logger.error("command failed", extra={"command": command, "error": str(e)})
            run_manager.add_failure(run_id, command, e)
        run_manager.set_result(run_id, 'summary', result)

        run = run_manager.get_run(run_id)
        artifacts, failures = list(run.artifacts), list(run.failures)
        manifest = run_manager.finish(run_id)
        first_failure = failures[0] if failures else None
        return {
            'success': not failures,
            'command': command,
            'result': result,
            'artifacts': artifacts + [manifest],
            'manifest': manifest,
            'error': first_failure['error'] if first_failure else None,
            'error_type': first_failure['error_type'] if first_failure else None,
        }

    # ------------------------------------------------------------------
    # Inputs

    def _simulate_configured(self, cfg: RunConfig, scale: float = 1.0) -> Trajectory:
        system = make_system(cfg.system.name, **cfg.system.params)
        x0, dt, n_steps = cfg.system.resolved()
        return simulate(system, scale * x0, dt, n_steps)

    def _input_trajectory(self, run_id: str, cfg: RunConfig, trajectories: Optional[Sequence[str]]) -> Trajectory:
        if trajectories:
            run_manager.add_trace(run_id, f'load_{Path(trajectories[0]).name}')
            return load_trajectory(trajectories[0])
        run_manager.add_trace(run_id, f'simulate_{cfg.system.name}')
        return self._simulate_configured(cfg)

    # ------------------------------------------------------------------
    # Handlers

    def _simulate(self, run_id: str, cfg: RunConfig, out: Path) -> Dict[str, Any]:
        traj = self._simulate_configured(cfg)
        written = save_trajectory(traj, out / 'trajectory.csv', seed=cfg.seed)
        run_manager.add_artifact(run_id, written['csv'], written['sidecar'])
        return {'system': cfg.system.name, 'rows': written['rows'], 'energy_drift': energy_drift(traj)}

    def _analyze(
        self,
        run_id: str,
        cfg: RunConfig,
        out: Path,
        trajectories: Optional[Sequence[str]],
        noise_scan: bool,
    ) -> Dict[str, Any]:
        traj = self._input_trajectory(run_id, cfg, trajectories)
        if noise_scan:
            rows = noise_eigenvalue_scan(traj.points, cfg.preprocess.noise_sigmas, make_rng(cfg.seed, 'noise_scan'))
            run_manager.add_artifact(run_id, artifact_io.write_noise_scan(rows, out / 'noise_scan.csv'))

        state = run_pipeline(
            traj.points,
            train_config=cfg.pullnet,
            L_grid=cfg.erd.grid(),
            eps_p=cfg.preprocess.eps_p,
            eps_n=cfg.preprocess.eps_n,
            reduce=cfg.preprocess.reduce,
            chain_length=cfg.sampler.chain_length,
            start_index=cfg.sampler.start_index,
            n_chains=cfg.sampler.n_chains,
            detection_mode=cfg.erd.detection_mode,
            root_seed=cfg.seed,
            jobs=cfg.jobs,
        )
        run_manager.add_trace(run_id, *state['trace'])
        if state.get('whiten_model') is not None:
            run_manager.add_artifact(run_id, artifact_io.save_whiten_model(state['whiten_model'], out / 'whiten.json'))
        if state.get('erd') is not None:
            run_manager.add_artifact(run_id, artifact_io.write_erd_csv(state['erd'], out / 'erd.csv'))
        report = state['report']
        if report['type'] == 'error':
            raise _StageFailure(report['error'], report.get('error_type'))

        run = run_manager.get_run(run_id)
        run_manager.add_artifact(
            run_id,
            artifact_io.write_detection_json(state['detection'], state['erd'], out / 'detection.json', run.config_sha256),
        )
        return report['detection']

    def _scan(self, run_id: str, cfg: RunConfig, out: Path) -> Dict[str, Any]:
        spec = cfg.scan_spec()
        result = run_scan(spec)
        extra: Dict[str, Any] = {}
        if result.is_grid():
            try:
                extra['breakdown_slope'] = kepler_breakdown_slope(result)
            except InsufficientDataError as e:
                extra['breakdown_slope'] = None
                result.notes.append(str(e))
        else:
            extra['crossings_1.5'] = crossings(result, 1.5)
            extra['crossings_2.5'] = crossings(result, 2.5)

        if cfg.scan.maximize_bracket is not None:
            try:
                value, n_eff = maximize_neff(spec, cfg.scan.maximize_bracket)
                extra['maximum'] = {'value': value, 'n_eff': n_eff}
            except NoMaximumFoundError as e:
                extra['maximum'] = None
                result.notes.append(str(e))

        run_manager.add_artifact(
            run_id,
            artifact_io.write_scan_csv(result, out / 'scan.csv'),
            artifact_io.write_scan_summary(result, out / 'scan.json', extra),
        )
        for value, message in result.failures.items():
            run_manager.add_failure(run_id, f'scan_value_{value:.6g}', _StageFailure(message))
        return {'axis': result.axis, 'n_values': len(result.points), 'transitions': result.transitions, **extra}

    def _baseline(self, run_id: str, cfg: RunConfig, out: Path, trajectories: Optional[Sequence[str]]) -> Dict[str, Any]:
        traj = self._input_trajectory(run_id, cfg, trajectories)
        method = cfg.baselines.method
        stem = out / f'baseline_{method}'
        if method == 'pca':
            report = pca_eigenvalue_report(traj.points, cfg.preprocess.eps_p)
            run_manager.add_artifact(run_id, *artifact_io.write_pca(report, stem))
            return {'method': method, 'dimension': report['dimension'], 'n_conserved': report['n_linear']}

        # Non-linear baselines see every direction, rescaled to unit variance.
        model = fit_whiten(traj.points, eps_p=cfg.preprocess.eps_p, reduce=False, eps_n=cfg.preprocess.eps_n)
        whitened = apply_whiten(model, traj.points)
        if method == 'autoencoder':
            ae = autoencoder_dim(
                whitened,
                s_range=cfg.baselines.s_values,
                threshold=cfg.baselines.ae_threshold,
                cfg=cfg.pullnet.model_copy(update={'seed': derive_seed(cfg.seed, 'autoencoder')}),
                restarts=cfg.baselines.ae_restarts,
            )
            run_manager.add_artifact(run_id, *artifact_io.write_autoencoder(ae, stem))
            return {'method': method, 'dimension': ae.dimension, 'threshold_met': ae.threshold_met,
                    'n_conserved': traj.dim - ae.dimension}

        curve = fractal_dim(
            whitened,
            window=cfg.baselines.fractal_window,
            max_points=cfg.baselines.fractal_max_points,
            rng=make_rng(cfg.seed, 'fractal'),
            n_bins=cfg.baselines.fractal_bins,
        )
        run_manager.add_artifact(run_id, *artifact_io.write_fractal(curve, stem, dim=traj.dim))
        return {'method': method, 'slope': curve.slope, 'n_conserved': traj.dim - int(round(curve.slope))}

    def _export(self, run_id: str, cfg: RunConfig, out: Path, trajectories: Optional[Sequence[str]]) -> Dict[str, Any]:
        if trajectories:
            if len(trajectories) not in (2, 3):
                raise ValueError('export takes two or three trajectory files')
            trajs: List[Trajectory] = [load_trajectory(p) for p in trajectories]
        else:
            trajs = [self._simulate_configured(cfg, scale) for scale in cfg.export.x0_scales]
        traj_c = trajs[2] if len(trajs) == 3 else None
        written = export_gauge_fixed(trajs[0], trajs[1], traj_c, out / 'gauge_fixed.txt', targets=cfg.export.targets)
        run_manager.add_artifact(run_id, written['data'], written['manifest'], written['eval'])

        system = trajs[0].system
        formulas = list(cfg.export.formulas)
        if not formulas and system is not None:
            formulas = [f.expression for f in ground_truth_formulas(system.name, system.params)]
        candidates = []
        for formula in formulas:
            entry: Dict[str, Any] = {'formula': formula}
            for tag, traj in zip('ABC', trajs):
                try:
                    entry[tag] = evaluate_candidate(formula, traj).to_dict()
                except PoincareError as e:
                    entry[tag] = {'error': str(e)}
            candidates.append(entry)
        if candidates:
            run_manager.add_artifact(run_id, artifact_io.write_json({'candidates': candidates}, out / 'candidates.json'))
        return {'rows': written['rows'], 'n_candidates': len(candidates)}

    def _stability(self, run_id: str, cfg: RunConfig, out: Path, trajectories: Optional[Sequence[str]]) -> Dict[str, Any]:
        traj = self._input_trajectory(run_id, cfg, trajectories)
        model = fit_whiten(traj.points, eps_p=cfg.preprocess.eps_p, reduce=cfg.preprocess.reduce, eps_n=cfg.preprocess.eps_n)
        whitened = apply_whiten(model, traj.points)

        nets = {}
        for L in cfg.erd.grid():
            net, _, _ = train_pull(whitened, cfg.pullnet.for_scale(L, derive_seed(cfg.seed, 'train', f'{L:.6g}')))
            nets[float(L)] = net
            run_manager.add_artifact(run_id, artifact_io.save_checkpoint(net, out / 'checkpoints' / f'pull_L{L:.4g}.pt'))

        report = stability_sweep(
            nets,
            whitened,
            make_rng(cfg.seed, 'stability'),
            n_points=cfg.sampler.stability_points,
            chain_len=cfg.sampler.chain_length,
            n_linear=model.n_linear if cfg.preprocess.reduce else 0,
        )
        ground_truth = traj.system.ground_truth_n if traj.system is not None else None
        run_manager.add_artifact(run_id, *artifact_io.write_stability(report, out / 'stability.csv', ground_truth))

        if cfg.sampler.dump_chain:
            best_L = float(np.median(report.best_L))
            L = min(nets, key=lambda k: abs(k - best_L))
            seed = derive_seed(cfg.seed, 'dump_chain')
            cloud = walk_pull_chain(nets[L], whitened[midpoint_index(len(whitened))], cfg.sampler.chain_length,
                                    make_rng(seed), seed=seed)
            run_manager.add_artifact(run_id, *artifact_io.write_sample_cloud(cloud, out / 'chain.csv'))

        summary = report.summary()
        if ground_truth is not None:
            summary['fraction_correct'] = report.fraction_correct(ground_truth)
        return summary


class _StageFailure(PoincareError):
    """A failure already reported by a lower layer as a message."""

    def __init__(self, message: str, error_type: Optional[str] = None):
        super().__init__(message)
        self.error_type = error_type


# Global executor instance
command_executor = CommandExecutor()
