import math
from dataclasses import dataclass
from enum import Enum
from typing import ClassVar, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from admkit.errors import DomainError

K_STANDARD = 388440.0  # psi/hour, standard short-term ramp rate
HOURS_PER_YEAR = 8760.0

THETA_FIELDS = (
    "mu_a",
    "sigma_a",
    "mu_b",
    "sigma_b",
    "mu_c",
    "sigma_c",
    "mu_n",
    "sigma_n",
    "mu_sigma0",
    "sigma_sigma0",
)
SCALE_FIELDS = THETA_FIELDS[1::2]


class RandomEffects(BaseModel):
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    a: float = Field(gt=0)
    b: float = Field(gt=0)
    c: float = Field(gt=0)
    n: float = Field(gt=0)
    sigma0: float = Field(gt=0, lt=1)


class HyperParams(BaseModel):
    """Log-normal location/scale parameters of the five random effects.

    Scale components outside (0, inf) are representable so that random-walk
    proposals can leave the support; `in_support` tells them apart and the
    prior assigns them zero mass.
    """

    model_config = ConfigDict(frozen=True, allow_inf_nan=False, extra="forbid")

    mu_a: float
    sigma_a: float
    mu_b: float
    sigma_b: float
    mu_c: float
    sigma_c: float
    mu_n: float
    sigma_n: float
    mu_sigma0: float
    sigma_sigma0: float

    @property
    def in_support(self) -> bool:
        return all(getattr(self, name) > 0 for name in SCALE_FIELDS)

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in THETA_FIELDS], dtype=float)

    @classmethod
    def from_array(cls, values: np.ndarray | list[float]) -> "HyperParams":
        values = [float(v) for v in values]
        if len(values) != len(THETA_FIELDS):
            raise DomainError(f"Expected {len(THETA_FIELDS)} hyperparameters, got {len(values)}.")
        return cls(**dict(zip(THETA_FIELDS, values)))


REFERENCE_THETA = HyperParams(
    mu_a=-7.50,
    sigma_a=0.50,
    mu_b=3.20,
    sigma_b=0.20,
    mu_c=-22.00,
    sigma_c=0.30,
    mu_n=-1.00,
    sigma_n=0.20,
    mu_sigma0=0.15,
    sigma_sigma0=0.05,
)


class TestConfig(BaseModel):
    __test__: ClassVar[bool] = False

    model_config = ConfigDict(frozen=True, extra="forbid", ser_json_inf_nan="constants")

    k: float = Field(default=K_STANDARD, gt=0)
    tau_c: float = Field(default=math.inf, gt=0)
    censor_time: float = Field(default=math.inf, gt=0)
    n_boards: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def _censor_after_ramp(self) -> "TestConfig":
        if math.isfinite(self.tau_c) and self.censor_time <= self.ramp_end:
            raise ValueError("censor_time must exceed the ramp duration tau_c / k.")
        return self

    @property
    def ramp_end(self) -> float:
        return self.tau_c / self.k


class Phase(str, Enum):
    RAMP = "ramp"
    CONSTANT = "constant"
    SURVIVED = "survived"


class DamageSolution(BaseModel):
    model_config = ConfigDict(frozen=True, ser_json_inf_nan="constants")

    failure_time: float
    phase: Phase
    alpha_at_t0: float = Field(ge=0)
    alpha_final: float = Field(default=1.0, ge=0)


class RampConstantProfile(BaseModel):
    model_config = ConfigDict(frozen=True)

    k: float = Field(gt=0)
    tau_c: float = Field(default=math.inf, gt=0)

    @property
    def ramp_end(self) -> float:
        return self.tau_c / self.k


@dataclass(frozen=True)
class PiecewiseProfile:
    """Piecewise-constant load: `levels[i]` psi holds on [breakpoints[i], breakpoints[i + 1])."""

    breakpoints: np.ndarray
    levels: np.ndarray

    def __post_init__(self) -> None:
        bp = np.asarray(self.breakpoints, dtype=float)
        lv = np.asarray(self.levels, dtype=float)
        if bp.ndim != 1 or bp.shape != lv.shape or bp.size == 0:
            raise DomainError("breakpoints and levels must be equal-length, nonempty 1-D arrays.")
        if bp[0] != 0.0 or np.any(np.diff(bp) <= 0):
            raise DomainError("breakpoints must start at 0 and increase strictly.")
        if np.any(lv < 0) or not np.all(np.isfinite(lv)):
            raise DomainError("load levels must be finite and nonnegative.")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "levels", lv)

    def level_at(self, t: float) -> float:
        return float(self.levels[np.searchsorted(self.breakpoints, t, side="right") - 1])

    @property
    def max_level(self) -> float:
        return float(self.levels.max())


LoadProfile = RampConstantProfile | PiecewiseProfile


@dataclass(frozen=True)
class EffectsBatch:
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    n: np.ndarray
    sigma0: np.ndarray

    def __len__(self) -> int:
        return int(self.a.size)

    def item(self, index: int) -> RandomEffects:
        sigma0 = float(np.clip(self.sigma0[index], np.finfo(float).tiny, np.nextafter(1.0, 0.0)))
        return RandomEffects(
            a=float(self.a[index]),
            b=float(self.b[index]),
            c=float(self.c[index]),
            n=float(self.n[index]),
            sigma0=sigma0,
        )

    def subset(self, mask: np.ndarray) -> "EffectsBatch":
        return EffectsBatch(self.a[mask], self.b[mask], self.c[mask], self.n[mask], self.sigma0[mask])

    @classmethod
    def from_effects(cls, effects: list[RandomEffects]) -> "EffectsBatch":
        columns = ("a", "b", "c", "n", "sigma0")
        return cls(*(np.array([getattr(fx, name) for fx in effects], dtype=float) for name in columns))


class CensoredSample(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    times: list[float] = Field(default_factory=list)
    n_censored: int = Field(default=0, ge=0)
    config: TestConfig = Field(default_factory=TestConfig)

    @field_validator("times")
    @classmethod
    def _nonnegative(cls, times: list[float]) -> list[float]:
        if any(not t >= 0 for t in times):
            raise ValueError("failure times must be nonnegative.")
        return times

    @model_validator(mode="after")
    def _within_censor(self) -> "CensoredSample":
        if any(t > self.config.censor_time for t in self.times):
            raise ValueError("uncensored failure times cannot exceed censor_time.")
        return self

    @property
    def n_total(self) -> int:
        return len(self.times) + self.n_censored


class PriorSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    location_variance: float = Field(default=20.0, gt=0)
    sigma0_location_variance: float = Field(default=1.0, gt=0)
    scale_shape: float = Field(default=0.01, gt=0)
    scale_rate: float = Field(default=0.01, gt=0)


DEFAULT_PROPOSAL_DIAGONAL = (0.01, 0.01, 0.01, 0.01, 0.2, 0.01, 0.01, 0.01, 0.1, 0.01)


class ProposalSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    diagonal: tuple[float, ...] = DEFAULT_PROPOSAL_DIAGONAL

    @field_validator("diagonal")
    @classmethod
    def _ten_nonnegative(cls, diagonal: tuple[float, ...]) -> tuple[float, ...]:
        if len(diagonal) != len(THETA_FIELDS):
            raise ValueError(f"proposal diagonal needs {len(THETA_FIELDS)} entries.")
        if any(not (v >= 0 and math.isfinite(v)) for v in diagonal):
            raise ValueError("proposal variances must be finite and nonnegative.")
        return diagonal


class LoadModelParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    dead_mean: float = 1.0
    dead_variance: float = Field(default=0.01, gt=0)
    sustained_mean_years: float = Field(default=0.1, gt=0)
    sustained_shape: float = Field(default=3.122, gt=0)
    sustained_scale: float = Field(default=0.0481, gt=0)
    extraordinary_gap_mean_years: float = Field(default=1.0, gt=0)
    extraordinary_mean_years: float = Field(default=0.03835, gt=0)
    extraordinary_shape: float = Field(default=0.826, gt=0)
    extraordinary_scale: float = Field(default=0.1023, gt=0)
    gamma: float = Field(default=0.25, ge=0)
    alpha_d: float = Field(default=1.25, gt=0)
    alpha_l: float = Field(default=1.5, gt=0)
    r_o: float = Field(default=2722.0, gt=0)

    @property
    def design_denominator(self) -> float:
        return self.gamma * self.alpha_d + self.alpha_l


class ChainConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    datasets: list[CensoredSample]
    delta: float = Field(gt=0)
    burn_in: int = Field(default=100_000, ge=0)
    thin: int = Field(default=10_000, ge=1)
    n_draws: int = Field(default=500, ge=1)
    proposal: ProposalSpec = Field(default_factory=ProposalSpec)
    prior: PriorSpec = Field(default_factory=PriorSpec)
    initial_theta: HyperParams = REFERENCE_THETA
    seed: int
    standardize: bool = True
    summary_scales: list[list[float]] | None = None
    pilot_replicates: int = Field(default=200, ge=2)
    progress_every: int = Field(default=1000, ge=1)

    @field_validator("datasets")
    @classmethod
    def _nonempty_datasets(cls, datasets: list[CensoredSample]) -> list[CensoredSample]:
        if not datasets:
            raise ValueError("at least one dataset is required.")
        if any(d.n_total == 0 for d in datasets):
            raise ValueError("datasets used for fitting must contain boards.")
        return datasets

    @property
    def total_iterations(self) -> int:
        return self.burn_in + self.thin * self.n_draws


class ChainDraw(BaseModel):
    model_config = ConfigDict(frozen=True)

    iteration: int
    theta: HyperParams
    p_hat: list[float]
    kernel_log: float
    acceptance_rate: float

    def to_record(self) -> dict[str, object]:
        return {
            "type": "draw",
            "iteration": self.iteration,
            **self.theta.model_dump(),
            "p_hat": self.p_hat,
            "kernel_log": self.kernel_log,
            "acceptance_rate": self.acceptance_rate,
        }

    @classmethod
    def from_record(cls, record: dict[str, object]) -> "ChainDraw":
        return cls(
            iteration=record["iteration"],
            theta=HyperParams(**{name: record[name] for name in THETA_FIELDS}),
            p_hat=record["p_hat"],
            kernel_log=record["kernel_log"],
            acceptance_rate=record["acceptance_rate"],
        )


class BandwidthCalibration(BaseModel):
    delta: float
    qualified: bool
    rates: dict[float, float] = Field(default_factory=dict)


class FailureProbability(BaseModel):
    per_draw: list[float]
    pooled: float
    n_invalid: int = 0


class ReliabilityPoint(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="constants")

    phi: float
    p_f: float = Field(ge=0, le=1)
    beta: float
    per_draw_p_f: list[float] = Field(default_factory=list)
    beta_lo: float
    beta_hi: float
    mode: Literal["dol", "nodol"]
    n_invalid: int = 0


class KdResult(BaseModel):
    beta_target: float
    phi_1: float = Field(gt=0)
    phi_2: float = Field(gt=0)
    k_d: float
    interval: tuple[float, float]
    n_draws_used: int = 0

    @model_validator(mode="after")
    def _ordered_interval(self) -> "KdResult":
        lo, hi = self.interval
        if not lo <= self.k_d <= hi:
            raise ValueError("K_D point estimate must lie inside its interval.")
        return self
