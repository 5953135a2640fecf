"""Censoring-aware ABC-MCMC over the hyperparameters, for one or more datasets.

Each dataset contributes a Gaussian kernel on 19 quantiles of the uncensored
failure times, plus the binomial factor F^(n - n_c) (1 - F)^n_c evaluated at
the simulated failure fraction F.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from scipy import special, stats

from admkit.errors import ConfigError, DomainError, NumericalError
from admkit.hierarchy import log_prior, propose
from admkit.models import BandwidthCalibration, CensoredSample, ChainConfig, ChainDraw, HyperParams, TestConfig
from admkit.rng import substream
from admkit.simulate import simulate_failure_times

logger = logging.getLogger(__name__)

QUANTILE_LEVELS = np.arange(1, 20) / 20.0
N_SUMMARIES = QUANTILE_LEVELS.size


def summary_stats(times: list[float] | np.ndarray) -> np.ndarray:
    """Quantiles at 5%, 10%, ..., 95% with linear interpolation between order statistics."""
    values = np.asarray(times, dtype=float)
    if values.size == 0:
        raise DomainError("summary statistics need at least one uncensored time.")
    return np.quantile(values, QUANTILE_LEVELS)


def _summaries(times: list[float] | np.ndarray, standardize: bool) -> np.ndarray:
    values = np.asarray(times, dtype=float)
    return summary_stats(np.log(values) if standardize else values)


def kernel_log(s: np.ndarray, s_obs: np.ndarray, delta: float, scale: np.ndarray | None = None) -> float:
    """Log Normal(0, delta^2) kernel on (s - s_obs) / scale, up to an additive constant."""
    diff = np.asarray(s, dtype=float) - np.asarray(s_obs, dtype=float)
    if scale is not None:
        diff = diff / np.asarray(scale, dtype=float)
    return float(-0.5 * np.sum((diff / delta) ** 2))


@dataclass(frozen=True)
class ChainState:
    """Chain position with the simulated summaries and failure fractions behind it.

    `summaries[d]` is None when dataset d's replicate had no uncensored boards.
    """

    theta: HyperParams
    summaries: tuple[np.ndarray | None, ...]
    p_hat: tuple[float, ...]
    kernel_logs: tuple[float, ...]
    log_prior: float = 0.0

    def __post_init__(self) -> None:
        if not len(self.summaries) == len(self.p_hat) == len(self.kernel_logs):
            raise DomainError("one summary, failure fraction and kernel value per dataset.")
        if any(not 0.0 <= p <= 1.0 for p in self.p_hat):
            raise DomainError("failure fractions must lie in [0, 1].")

    @property
    def kernel_total(self) -> float:
        return float(sum(self.kernel_logs))


def _binomial_log(state: ChainState, datasets: list[CensoredSample]) -> float:
    total = 0.0
    for p_hat, data in zip(state.p_hat, datasets):
        n_failed = data.n_total - data.n_censored
        total += float(special.xlogy(n_failed, p_hat) + special.xlogy(data.n_censored, 1.0 - p_hat))
    return total


def log_accept_ratio(
    current: ChainState, proposal: ChainState, log_prior_ratio: float, datasets: list[CensoredSample]
) -> float:
    """Log of the acceptance probability, at most 0."""
    if len(current.p_hat) != len(datasets) or len(proposal.p_hat) != len(datasets):
        raise DomainError("states and datasets disagree on the number of datasets.")
    proposal_part = proposal.kernel_total + _binomial_log(proposal, datasets)
    if log_prior_ratio == -math.inf or proposal_part == -math.inf:
        return -math.inf
    current_part = current.kernel_total + _binomial_log(current, datasets)
    if current_part == -math.inf:
        return 0.0
    return min(0.0, log_prior_ratio + proposal_part - current_part)


def abc_accept_ratio(
    current: ChainState, proposal: ChainState, theta_prior_ratio: float, config: ChainConfig
) -> float:
    if not theta_prior_ratio > 0:
        return 0.0
    return math.exp(log_accept_ratio(current, proposal, math.log(theta_prior_ratio), config.datasets))


def _design(sample: CensoredSample) -> TestConfig:
    return sample.config.model_copy(update={"n_boards": sample.n_total})


def summary_scales(
    theta: HyperParams,
    datasets: list[CensoredSample],
    n_replicates: int,
    seed: int,
    standardize: bool = True,
) -> list[np.ndarray]:
    """Per-dataset MAD of each quantile over pilot replicates at `theta`; ones in literal mode."""
    if not standardize:
        return [np.ones(N_SUMMARIES) for _ in datasets]
    scales = []
    for d, sample in enumerate(datasets):
        design = _design(sample)
        rows = []
        for r in range(n_replicates):
            replicate = simulate_failure_times(theta, design, substream(seed, "pilot", d, r))
            if replicate.times:
                rows.append(_summaries(replicate.times, standardize))
        if len(rows) < 2:
            logger.warning("Dataset %d: too few uncensored pilot replicates; using unit scales.", d)
            scales.append(np.ones(N_SUMMARIES))
            continue
        mad = stats.median_abs_deviation(np.vstack(rows), axis=0, scale="normal")
        scales.append(np.where(np.isfinite(mad) & (mad > 0), mad, 1.0))
    return scales


class _Target:
    """Observed summaries, designs and scales shared by every iteration of a chain."""

    def __init__(self, config: ChainConfig, scales: list[np.ndarray]) -> None:
        self.config = config
        self.scales = scales
        self.designs = [_design(d) for d in config.datasets]
        self.observed = [_summaries(d.times, config.standardize) if d.times else None for d in config.datasets]

    def evaluate(self, theta: HyperParams, iteration: int, log_prior_value: float) -> ChainState:
        summaries: list[np.ndarray | None] = []
        p_hat: list[float] = []
        kernels: list[float] = []
        for d, (design, observed, scale) in enumerate(zip(self.designs, self.observed, self.scales)):
            replicate = simulate_failure_times(theta, design, substream(self.config.seed, "fit", iteration, d))
            p_hat.append(len(replicate.times) / design.n_boards)
            if not replicate.times:
                summaries.append(None)
                kernels.append(0.0 if observed is None else -math.inf)
                continue
            s = _summaries(replicate.times, self.config.standardize)
            summaries.append(s)
            kernels.append(0.0 if observed is None else kernel_log(s, observed, self.config.delta, scale))
        return ChainState(
            theta=theta,
            summaries=tuple(summaries),
            p_hat=tuple(p_hat),
            kernel_logs=tuple(kernels),
            log_prior=log_prior_value,
        )


@dataclass
class ChainResult:
    draws: list[ChainDraw]
    acceptance_rate: float
    delta: float
    seed: int
    standardize: bool
    summary_scales: list[list[float]]
    iterations: int
    rejected_numerical: int = 0
    final_state: ChainState | None = field(default=None, repr=False)


def run_chain(config: ChainConfig) -> ChainResult:
    """Run burn_in + thin * n_draws iterations and keep every thin-th post-burn-in state.

    Iteration i draws its proposal and uniform from substream (seed, "fit", i)
    and its synthetic datasets from (seed, "fit", i, d), so a chain is fixed
    by its config alone.
    """
    scales = (
        [np.asarray(s, dtype=float) for s in config.summary_scales]
        if config.summary_scales is not None
        else summary_scales(
            config.initial_theta, config.datasets, config.pilot_replicates, config.seed, config.standardize
        )
    )
    if len(scales) != len(config.datasets):
        raise DomainError("one summary scale vector is needed per dataset.")
    target = _Target(config, scales)

    initial_prior = log_prior(config.initial_theta, config.prior)
    if initial_prior == -math.inf:
        raise DomainError("initial theta lies outside the prior support.")
    current = target.evaluate(config.initial_theta, 0, initial_prior)

    total = config.total_iterations
    accepted = 0
    rejected_numerical = 0
    draws: list[ChainDraw] = []
    logger.info(
        "Starting chain: %d iterations, delta=%g, %d dataset(s), standardize=%s.",
        total,
        config.delta,
        len(config.datasets),
        config.standardize,
    )
    for iteration in range(1, total + 1):
        rng = substream(config.seed, "fit", iteration)
        theta = propose(current.theta, config.proposal, rng)
        u = rng.uniform()

        log_ratio = -math.inf
        prior_value = log_prior(theta, config.prior)
        if prior_value > -math.inf:
            try:
                candidate = target.evaluate(theta, iteration, prior_value)
            except NumericalError as exc:
                rejected_numerical += 1
                logger.warning(
                    "Iteration %d: rejecting theta=%s after numerical failure: %s",
                    iteration,
                    theta.as_array().tolist(),
                    exc,
                )
            else:
                log_ratio = log_accept_ratio(current, candidate, prior_value - current.log_prior, config.datasets)
                if u < math.exp(log_ratio):
                    current = candidate
                    accepted += 1

        if iteration > config.burn_in and (iteration - config.burn_in) % config.thin == 0:
            draws.append(
                ChainDraw(
                    iteration=iteration,
                    theta=current.theta,
                    p_hat=list(current.p_hat),
                    kernel_log=current.kernel_total,
                    acceptance_rate=accepted / iteration,
                )
            )
        if iteration % config.progress_every == 0:
            logger.info(
                "Iteration %d/%d: acceptance %.4f, kernel %.3f.",
                iteration,
                total,
                accepted / iteration,
                current.kernel_total,
            )

    rate = accepted / total if total else 0.0
    logger.info("Chain finished: acceptance %.4f, %d draws kept.", rate, len(draws))
    return ChainResult(
        draws=draws,
        acceptance_rate=rate,
        delta=config.delta,
        seed=config.seed,
        standardize=config.standardize,
        summary_scales=[s.tolist() for s in scales],
        iterations=total,
        rejected_numerical=rejected_numerical,
        final_state=current,
    )


def bandwidth_grid(start: float = 0.1, stop: float = 3.0, num: int = 30) -> list[float]:
    return np.linspace(start, stop, num).tolist()


def calibrate_bandwidth(
    candidates: list[float],
    pilot_iterations: int,
    config: ChainConfig,
    target_rate: float = 0.01,
) -> BandwidthCalibration:
    """Smallest candidate bandwidth whose pilot chain accepts at least `target_rate`.

    Every pilot chain shares one seed drawn from the "calibrate" stream. If no
    candidate qualifies the largest is returned with `qualified=False`.
    """
    if not candidates or any(not c > 0 for c in candidates):
        raise DomainError("bandwidth candidates must be a nonempty list of positive values.")
    scales = config.summary_scales
    if scales is None:
        scales = [
            s.tolist()
            for s in summary_scales(
                config.initial_theta, config.datasets, config.pilot_replicates, config.seed, config.standardize
            )
        ]
    pilot_seed = int(substream(config.seed, "calibrate").integers(2**62))

    rates: dict[float, float] = {}
    for delta in sorted(candidates):
        pilot = config.model_copy(
            update={
                "delta": float(delta),
                "burn_in": pilot_iterations - 1,
                "thin": 1,
                "n_draws": 1,
                "seed": pilot_seed,
                "summary_scales": scales,
            }
        )
        rate = run_chain(pilot).acceptance_rate
        rates[float(delta)] = rate
        logger.info("Pilot delta=%g: acceptance %.4f.", delta, rate)
        if rate >= target_rate:
            return BandwidthCalibration(delta=float(delta), qualified=True, rates=rates)

    largest = float(max(candidates))
    logger.warning("No bandwidth reached acceptance %.3f; falling back to delta=%g.", target_rate, largest)
    return BandwidthCalibration(delta=largest, qualified=False, rates=rates)


def chain_metadata(result: ChainResult, config: ChainConfig) -> dict[str, object]:
    return {
        "type": "metadata",
        "created_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "seed": result.seed,
        "delta": result.delta,
        "standardize": result.standardize,
        "summary_time_scale": "log_hours" if result.standardize else "hours",
        "summary_scales": result.summary_scales,
        "acceptance_rate": result.acceptance_rate,
        "iterations": result.iterations,
        "rejected_numerical": result.rejected_numerical,
        "burn_in": config.burn_in,
        "thin": config.thin,
        "n_draws": config.n_draws,
        "proposal": list(config.proposal.diagonal),
        "prior": config.prior.model_dump(),
        "initial_theta": config.initial_theta.model_dump(),
        "datasets": [
            {
                "n_total": d.n_total,
                "n_censored": d.n_censored,
                "k": d.config.k,
                "tau_c": d.config.tau_c,
                "censor_time": d.config.censor_time,
            }
            for d in config.datasets
        ],
    }


def write_chain(result: ChainResult, config: ChainConfig, path: Path) -> Path:
    """JSON-lines chain file: a metadata header line, then one line per kept draw."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [json.dumps(chain_metadata(result, config))]
    lines.extend(json.dumps(draw.to_record()) for draw in result.draws)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_chain(path: Path) -> tuple[dict[str, object], list[ChainDraw]]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Chain file not found: {path}")
    metadata: dict[str, object] = {}
    draws: list[ChainDraw] = []
    for number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            if record.get("type") == "metadata":
                metadata = record
            else:
                draws.append(ChainDraw.from_record(record))
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise ConfigError(f"{path}:{number}: malformed chain record: {exc}") from exc
    return metadata, draws

