"""
Configuration management using pydantic-settings.

Sources, highest priority first: CLI flags (init kwargs), environment
variables (POINCARE_ prefix, `__` between nested keys, `.env` honoured),
a TOML config file, then the defaults below.
"""
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from pydantic_settings import BaseSettings, InitSettingsSource, SettingsConfigDict

from src.analysis.erd import default_L_grid
from src.dynamics.systems import STATE_LABELS, SYSTEM_DEFAULTS, SystemName
from src.models.pullnet import TrainConfig
from src.orchestration.scan import AXIS_SYSTEMS, ScanAxis, ScanSpec
from src.utils.errors import ConfigError


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SystemSection(_Section):
    name: str = SystemName.HARMONIC
    params: Dict[str, float] = Field(default_factory=dict)
    x0: Optional[List[float]] = None
    dt: Optional[float] = Field(default=None, gt=0)
    n_steps: Optional[int] = Field(default=None, ge=1)

    @model_validator(mode="after")
    def _check_system(self) -> "SystemSection":
        if self.name not in SystemName.ALL:
            raise ValueError(f"unknown system '{self.name}', choose from {list(SystemName.ALL)}")
        unknown = set(self.params) - set(SYSTEM_DEFAULTS[self.name].params)
        if unknown:
            raise ValueError(f"system '{self.name}' has no parameters {sorted(unknown)}")
        if self.x0 is not None and len(self.x0) != len(STATE_LABELS[self.name]):
            raise ValueError(f"x0 must have {len(STATE_LABELS[self.name])} components for {self.name}")
        return self

    def resolved(self) -> Tuple[np.ndarray, float, int]:
        """(x0, dt, n_steps) with unset values taken from the system defaults."""
        defaults = SYSTEM_DEFAULTS[self.name]
        x0 = np.asarray(self.x0 if self.x0 is not None else defaults.x0, dtype=float)
        return x0, self.dt or defaults.dt, self.n_steps or defaults.n_steps


class PreprocessSection(_Section):
    eps_p: float = Field(default=1e-3, gt=0, lt=1)
    eps_n: float = Field(default=1e-3, ge=0)
    reduce: bool = True
    noise_sigmas: List[float] = Field(default_factory=lambda: [0.0, 1e-3, 1e-2, 1e-1, 1.0])


class SamplerSection(_Section):
    chain_length: int = Field(default=1000, ge=1)
    start_index: Optional[int] = Field(default=None, ge=0)
    n_chains: int = Field(default=1, ge=1)
    stability_points: int = Field(default=100, ge=1)
    dump_chain: bool = False


class ErdSection(_Section):
    log10_min: float = -2.5
    log10_max: float = 0.5
    n_points: int = Field(default=13, ge=3)
    L_values: Optional[List[float]] = None
    detection_mode: Literal["neff", "threshold"] = "neff"

    @model_validator(mode="after")
    def _check_grid(self) -> "ErdSection":
        if self.log10_min >= self.log10_max:
            raise ValueError("log10_min must be below log10_max")
        if self.L_values is not None and (len(self.L_values) < 3 or min(self.L_values) <= 0):
            raise ValueError("L_values needs at least 3 positive scales")
        return self

    def grid(self) -> np.ndarray:
        if self.L_values is not None:
            return np.sort(np.asarray(self.L_values, dtype=float))
        return default_L_grid(self.log10_min, self.log10_max, self.n_points)


class ScanSection(_Section):
    axis: Optional[ScanAxis] = None
    values: List[float] = Field(default_factory=list)
    orbits: List[float] = Field(default_factory=list)
    fixed_L: float = Field(default=0.1, gt=0)
    seeds_per_value: int = Field(default=3, ge=1)
    desk_scale: float = Field(default=1.0, gt=0)
    max_points: int = Field(default=100_000, ge=2)
    window_length: Optional[float] = Field(default=None, gt=0)
    custom_param: Optional[str] = None
    maximize_bracket: Optional[Tuple[float, float]] = None


class BaselinesSection(_Section):
    method: Literal["pca", "autoencoder", "fractal"] = "pca"
    ae_threshold: float = Field(default=1e-3, gt=0)
    ae_restarts: int = Field(default=1, ge=1)
    s_values: Optional[List[int]] = None
    fractal_max_points: int = Field(default=1000, ge=2)
    fractal_bins: int = Field(default=40, ge=4)
    fractal_window: Optional[Tuple[float, float]] = None


class ExportSection(_Section):
    targets: Tuple[float, float] = (1.0, 2.0)
    # Trajectories A, B and the held-out C start from the system x0 scaled by these factors.
    x0_scales: List[float] = Field(default_factory=lambda: [1.0, 1.5, 1.25])
    formulas: List[str] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_targets(self) -> "ExportSection":
        if self.targets[0] == self.targets[1]:
            raise ValueError("targets must differ")
        if len(self.x0_scales) not in (2, 3):
            raise ValueError("x0_scales needs 2 or 3 entries")
        return self


class RunConfig(BaseSettings):
    """Complete configuration of one command invocation."""
    model_config = SettingsConfigDict(
        env_prefix="POINCARE_",
        env_nested_delimiter="__",
        env_file=".env",
        extra="forbid",
        case_sensitive=False,
    )

    seed: int = Field(default=0, ge=0)
    jobs: int = Field(default=1, ge=1)
    out_dir: str = "runs/latest"
    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR"] = "INFO"
    log_format: Literal["json", "text"] = "json"
    torch_threads: int = Field(default=1, ge=1)

    system: SystemSection = Field(default_factory=SystemSection)
    preprocess: PreprocessSection = Field(default_factory=PreprocessSection)
    pullnet: TrainConfig = Field(default_factory=TrainConfig)
    sampler: SamplerSection = Field(default_factory=SamplerSection)
    erd: ErdSection = Field(default_factory=ErdSection)
    scan: ScanSection = Field(default_factory=ScanSection)
    baselines: BaselinesSection = Field(default_factory=BaselinesSection)
    export: ExportSection = Field(default_factory=ExportSection)

    def dump(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")

    def scan_spec(self) -> ScanSpec:
        """ScanSpec for the configured axis; raises ConfigError when unset or invalid."""
        if self.scan.axis is None:
            raise ConfigError("scan.axis is not set", keys=["scan.axis"])
        section = self.scan.model_dump(exclude={"maximize_bracket"})
        axis = section.pop("axis")
        # System settings only carry over when they describe the system the axis runs on.
        own = axis == ScanAxis.CUSTOM or AXIS_SYSTEMS[axis] == self.system.name
        system = self.system if own else SystemSection(name=AXIS_SYSTEMS[axis])
        try:
            return ScanSpec(
                axis=axis,
                system=system.name,
                params=system.params,
                x0=system.x0,
                dt=system.dt,
                n_steps=system.n_steps,
                train=self.pullnet,
                chain_length=self.sampler.chain_length,
                eps_p=self.preprocess.eps_p,
                eps_n=self.preprocess.eps_n,
                root_seed=self.seed,
                jobs=self.jobs,
                **section,
            )
        except ValidationError as e:
            raise _config_error(e, prefix="scan") from e


def _config_error(error: ValidationError, prefix: str = "") -> ConfigError:
    keys, lines = [], []
    for item in error.errors():
        key = ".".join(str(part) for part in ((prefix,) if prefix else ()) + tuple(item["loc"])) or "<root>"
        keys.append(key)
        lines.append(f"{key}: {item['msg']}")
    return ConfigError("Invalid configuration:\n  " + "\n  ".join(lines), keys=keys)


def read_toml(path: Path) -> Dict[str, Any]:
    if not path.exists():
        raise ConfigError(f"Config file not found: {path}", keys=[])
    try:
        with path.open("rb") as handle:
            return tomllib.load(handle)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"Cannot parse {path}: {e}", keys=[]) from e


def load_run_config(path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """
    Resolve a RunConfig from flags > env > TOML file > defaults.

    Nested override dicts are merged into the file's sections key by key.
    """
    file_data = read_toml(Path(path)) if path else {}

    class _FileBackedConfig(RunConfig):
        @classmethod
        def settings_customise_sources(cls, settings_cls, init_settings, env_settings, dotenv_settings, file_secret_settings):
            return init_settings, env_settings, dotenv_settings, InitSettingsSource(settings_cls, init_kwargs=file_data)

    try:
        return _FileBackedConfig(**(overrides or {}))
    except ValidationError as e:
        raise _config_error(e) from e
