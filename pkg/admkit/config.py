try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from functools import lru_cache
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from admkit.errors import ConfigError
from admkit.models import (
    K_STANDARD,
    REFERENCE_THETA,
    HyperParams,
    LoadModelParams,
    PriorSpec,
    ProposalSpec,
    TestConfig,
)


class AdmSettings(BaseSettings):
    model_config = SettingsConfigDict(
        env_prefix="ADMKIT_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    log_level: str = Field(default="INFO")
    threads: int = Field(default=1, ge=1)

    ode_step_test_hours: float = Field(default=0.1, gt=0)
    ode_step_service_hours: float = Field(default=1.0, gt=0)
    ode_min_segment_steps: int = Field(default=2000, ge=1)

    reliability_chunk_size: int = Field(default=10_000, ge=1)
    progress_every: int = Field(default=1000, ge=1)
    pilot_replicates: int = Field(default=200, ge=2)
    kde_n_sim: int = Field(default=100_000, ge=2)


@lru_cache(maxsize=1)
def get_settings() -> AdmSettings:
    return AdmSettings()


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DatasetSpec(TestConfig):
    name: str


class SimulateSection(_Section):
    theta: HyperParams = REFERENCE_THETA
    datasets: list[DatasetSpec] = Field(default_factory=list)

    def test_config(self, spec: DatasetSpec) -> TestConfig:
        return TestConfig(k=spec.k, tau_c=spec.tau_c, censor_time=spec.censor_time, n_boards=spec.n_boards)


class CalibrationSection(_Section):
    candidates: list[float] | None = None
    start: float = Field(default=0.1, gt=0)
    stop: float = Field(default=3.0, gt=0)
    num: int = Field(default=30, ge=1)
    pilot_iterations: int = Field(default=2000, ge=1)
    target_rate: float = Field(default=0.01, gt=0, lt=1)


class FitSection(_Section):
    datasets: list[Path]
    delta: float | None = Field(default=None, gt=0)
    calibrate: CalibrationSection | None = None
    burn_in: int = Field(default=100_000, ge=0)
    thin: int = Field(default=10_000, ge=1)
    n_draws: int = Field(default=500, ge=1)
    proposal: ProposalSpec = Field(default_factory=ProposalSpec)
    prior: PriorSpec = Field(default_factory=PriorSpec)
    initial_theta: HyperParams = REFERENCE_THETA
    standardize: bool = True
    pilot_replicates: int | None = Field(default=None, ge=2)
    output: str = "chain.jsonl"

    @model_validator(mode="after")
    def _delta_or_calibration(self) -> "FitSection":
        if self.delta is None and self.calibrate is None:
            raise ValueError("fit needs either delta or a [fit.calibrate] table.")
        return self


class OracleSection(_Section):
    chain: Path
    datasets: list[Path]
    n_sim: int | None = Field(default=None, ge=2)
    draws: list[int] | None = None
    max_draws: int | None = Field(default=None, ge=0)
    theta_true: HyperParams | None = None
    prior: PriorSpec = Field(default_factory=PriorSpec)
    band_width: float = Field(default=110.0, gt=0)
    band_above: float = Field(default=10.0, ge=0)
    output: str = "oracle.csv"
    fit_curves: bool = True
    curve_n_sim: int | None = Field(default=None, ge=2)
    curve_points: int = Field(default=200, ge=2)
    curve_output: str = "fit_curves.csv"
    band_output: str = "fit_bands.csv"


class ReliabilitySection(_Section):
    chain: Path | None = None
    thetas: list[HyperParams] | None = None
    n_draws: int | None = Field(default=50, ge=1)
    phi_grid: list[float]
    n_rep: int = Field(default=2000, ge=1)
    horizon_years: float = Field(default=30.0, gt=0)
    beta_targets: list[float] = Field(default_factory=lambda: [2.5, 3.0, 3.5])
    load_model: LoadModelParams = Field(default_factory=LoadModelParams)
    k: float = Field(default=K_STANDARD, gt=0)
    integrator: Literal["exact", "adams_bashforth"] = "exact"
    ode_step_hours: float | None = Field(default=None, gt=0)
    coupling: Literal["common", "independent"] = "common"
    chunk_size: int | None = Field(default=None, ge=1)
    full_scale: bool = False
    dump_load_path: bool = False
    histogram_phi: float | None = Field(default=None, ge=0)
    histogram_years: float = Field(default=100.0, gt=0)
    curve_output: str = "curve.csv"
    kd_output: str = "kd.csv"

    @model_validator(mode="after")
    def _theta_source(self) -> "ReliabilitySection":
        if (self.chain is None) == (self.thetas is None):
            raise ValueError("reliability needs exactly one of chain or thetas.")
        if not self.phi_grid:
            raise ValueError("phi_grid must not be empty.")
        if any(b <= a for a, b in zip(self.phi_grid, self.phi_grid[1:])):
            raise ValueError("phi_grid must be strictly ascending.")
        return self


class RunConfig(_Section):
    seed: int
    threads: int = Field(default=1, ge=1)
    output_dir: Path = Path("outputs")
    log_level: str | None = None

    simulate: SimulateSection | None = None
    fit: FitSection | None = None
    oracle: OracleSection | None = None
    reliability: ReliabilitySection | None = None

    def input_paths(self, command: str) -> list[Path]:
        section = getattr(self, command)
        if command == "fit":
            return list(section.datasets)
        if command == "oracle":
            return [section.chain, *section.datasets]
        if command == "reliability" and section.chain is not None:
            return [section.chain]
        return []


COMMANDS = ("simulate", "fit", "oracle", "reliability")


def load_run_config(
    path: str | Path,
    command: str | None = None,
    seed: int | None = None,
    threads: int | None = None,
) -> RunConfig:
    config_path = Path(path)
    if not config_path.exists():
        raise ConfigError(f"Run config not found: {config_path}")
    try:
        raw = tomllib.loads(config_path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{config_path}: {exc}") from exc

    if seed is not None:
        raw["seed"] = seed
    if threads is not None:
        raw["threads"] = threads
    raw.setdefault("threads", get_settings().threads)

    try:
        config = RunConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(f"{config_path}: {exc}") from exc

    if command is not None:
        if command not in COMMANDS:
            raise ConfigError(f"Unknown command: {command}")
        if getattr(config, command) is None:
            raise ConfigError(f"{config_path}: missing [{command}] table.")
        missing = [str(p) for p in config.input_paths(command) if not p.exists()]
        if missing:
            raise ConfigError(f"{config_path}: referenced files not found: {', '.join(missing)}")
    return config
