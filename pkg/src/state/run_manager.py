"""
Run state management: one RunState per command invocation.

Tracks the resolved configuration, seeds, artifacts, failures and execution
trace, and writes them to `manifest.json` in the run's output directory.
"""
import hashlib
import json
import platform
import uuid
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import scipy
import torch

TOOL_VERSION = "0.1.0"
MANIFEST_NAME = "manifest.json"


def config_hash(config: Dict[str, Any]) -> str:
    """SHA-256 of the canonical JSON form of a config dump."""
    canonical = json.dumps(config, sort_keys=True, default=str, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass
class RunState:
    """Everything needed to reproduce and audit one run."""
    run_id: str
    command: str
    config: Dict[str, Any]
    config_sha256: str
    seed: int
    out_dir: str
    tool_version: str = TOOL_VERSION
    versions: Dict[str, str] = field(default_factory=dict)
    started_at: str = field(default_factory=_now)
    finished_at: Optional[str] = None
    artifacts: List[str] = field(default_factory=list)
    failures: List[Dict[str, Any]] = field(default_factory=list)
    trace: List[str] = field(default_factory=list)
    results: Dict[str, Any] = field(default_factory=dict)

    @property
    def success(self) -> bool:
        return not self.failures


class RunManager:
    """
    Keeps run states in memory until they are finished and written.

    Failures are recorded rather than raised so a partly failed command still
    leaves a manifest explaining what happened.
    """

    def __init__(self):
        self._runs: Dict[str, RunState] = {}

    def create_run(self, command: str, config: Dict[str, Any], seed: int, out_dir: str) -> str:
        run_id = str(uuid.uuid4())
        self._runs[run_id] = RunState(
            run_id=run_id,
            command=command,
            config=config,
            config_sha256=config_hash(config),
            seed=seed,
            out_dir=str(out_dir),
            versions={
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "torch": torch.__version__,
            },
            trace=[f"{command}_start"],
        )
        return run_id

    def get_run(self, run_id: str) -> Optional[RunState]:
        return self._runs.get(run_id)

    def _require(self, run_id: str) -> RunState:
        run = self.get_run(run_id)
        if not run:
            raise ValueError(f"Run {run_id} not found")
        return run

    def add_artifact(self, run_id: str, *paths: str) -> None:
        self._require(run_id).artifacts.extend(str(p) for p in paths if p)

    def add_failure(self, run_id: str, stage: str, error: Exception) -> None:
        run = self._require(run_id)
        error_type = getattr(error, "error_type", None) or type(error).__name__
        run.failures.append({"stage": stage, "error": str(error), "error_type": error_type})
        run.trace.append(f"{stage}_failed")

    def add_trace(self, run_id: str, *events: str) -> None:
        self._require(run_id).trace.extend(events)

    def set_result(self, run_id: str, key: str, value: Any) -> None:
        self._require(run_id).results[key] = value

    def finish(self, run_id: str) -> str:
        """Write manifest.json and drop the run from memory. Returns the manifest path."""
        run = self._require(run_id)
        run.finished_at = _now()
        run.trace.append(f"{run.command}_{'complete' if run.success else 'failed'}")
        out = Path(run.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        manifest = out / MANIFEST_NAME
        manifest.write_text(json.dumps({**asdict(run), "success": run.success}, indent=2, default=str))
        del self._runs[run_id]
        return str(manifest)


# Global run manager instance
run_manager = RunManager()
