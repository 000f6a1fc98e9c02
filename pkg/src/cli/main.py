"""
Command-line entry point.

    python -m src.cli.main simulate --system harmonic --out runs/harmonic
    python -m src.cli.main analyze --trajectory runs/harmonic/trajectory.csv --out runs/harmonic
    python -m src.cli.main scan --axis pendulum_theta0 --values 5:175:18 --jobs 4
    python -m src.cli.main baseline --method fractal --system kepler

Exit codes: 0 when every requested artifact was written, 1 when the command
ran but failed, 2 for usage or configuration errors.
"""
import argparse
import json
import logging
import sys
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import torch

from src.cli.commands import CommandType, command_executor
from src.utils.config import load_run_config
from src.utils.errors import ConfigError
from src.utils.logging_setup import configure_logging

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2


def parse_values(text: str) -> List[float]:
    """`a:b:n` gives n evenly spaced values from a to b inclusive; otherwise a comma list."""
    text = text.strip()
    if not text:
        return []
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise argparse.ArgumentTypeError(f"expected a:b:n, got '{text}'")
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
        if count < 1:
            raise argparse.ArgumentTypeError(f"n must be >= 1, got {count}")
        return np.linspace(start, stop, count).tolist()
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from e


def parse_param(text: str) -> tuple:
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected k=v, got '{text}'")
    try:
        return key.strip(), float(value)
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"parameter '{key}' needs a numeric value") from e


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="poincare",
        description="Discover conserved quantities of dynamical systems from trajectory data.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML config file")
    common.add_argument("--system", help="system name (harmonic, kepler, pendulum, mirror, threebody)")
    common.add_argument("--seed", type=int, help="root seed")
    common.add_argument("--jobs", type=int, help="worker bound for parallel subtasks")
    common.add_argument("--out", help="output directory")
    common.add_argument("--param", type=parse_param, action="append", default=[], metavar="K=V",
                        help="system parameter override, repeatable")
    common.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    common.add_argument("--trajectory", nargs="+", help="trajectory CSV(s) instead of simulating")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser(CommandType.SIMULATE, parents=[common], help="integrate a system and write its trajectory")

    analyze = sub.add_parser(CommandType.ANALYZE, parents=[common], help="explained ratio diagram and detection")
    analyze.add_argument("--no-reduce", action="store_true", help="keep vanishing directions (eps_n regularized)")
    analyze.add_argument("--noise-scan", action="store_true", help="also write covariance eigenvalues vs noise")

    scan = sub.add_parser(CommandType.SCAN, parents=[common], help="n_eff along a parameter or time axis")
    scan.add_argument("--axis", help="scan axis")
    scan.add_argument("--values", type=parse_values, help="a:b:n or comma list")
    scan.add_argument("--orbits", type=parse_values, help="orbit counts for the kepler grid")

    baseline = sub.add_parser(CommandType.BASELINE, parents=[common], help="PCA, autoencoder or fractal estimate")
    baseline.add_argument("--method", choices=["pca", "autoencoder", "fractal"])

    sub.add_parser(CommandType.EXPORT, parents=[common], help="gauge-fixed dataset for symbolic regression")
    sub.add_parser(CommandType.STABILITY, parents=[common], help="n_eff from many starting points")
    return parser


def overrides_from_args(args: argparse.Namespace) -> Dict[str, Any]:
    """Nested override dict containing only the flags that were given."""
    overrides: Dict[str, Any] = {}
    for flag, key in (("seed", "seed"), ("jobs", "jobs"), ("out", "out_dir"), ("log_level", "log_level")):
        if getattr(args, flag, None) is not None:
            overrides[key] = getattr(args, flag)

    system: Dict[str, Any] = {}
    if args.system:
        system["name"] = args.system
    if args.param:
        system["params"] = dict(args.param)
    if system:
        overrides["system"] = system

    if getattr(args, "no_reduce", False):
        overrides["preprocess"] = {"reduce": False}
    if getattr(args, "method", None):
        overrides["baselines"] = {"method": args.method}

    scan: Dict[str, Any] = {}
    if getattr(args, "axis", None):
        scan["axis"] = args.axis
    if getattr(args, "values", None) is not None:
        scan["values"] = args.values
    if getattr(args, "orbits", None) is not None:
        scan["orbits"] = args.orbits
    if scan:
        overrides["scan"] = scan
    return overrides


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        cfg = load_run_config(args.config, overrides_from_args(args))
        if args.command == CommandType.SCAN:
            cfg.scan_spec()
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE

    configure_logging(cfg.log_level, cfg.log_format)
    torch.set_num_threads(cfg.torch_threads)

    outcome = command_executor.execute(
        args.command,
        cfg,
        trajectories=args.trajectory,
        noise_scan=getattr(args, "noise_scan", False),
    )
    if not outcome["success"]:
        print(f"error: {outcome['error_type']}: {outcome['error']}", file=sys.stderr)
        return EXIT_FAILED

    print(json.dumps({"command": outcome["command"], "result": outcome["result"], "manifest": outcome["manifest"]},
                     default=str))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
