import logging
import math

import numpy as np
from scipy import stats

from admkit.config import AdmSettings, get_settings
from admkit.damage import (
    INVALID_CODE,
    PHASE_CODES,
    FailureTimes,
    constant_load_failure_time,
    constant_load_failure_times,
    ramp_failure_time,
)
from admkit.errors import NumericalError, SimulationError, SolverError
from admkit.hierarchy import sample_effects_batch
from admkit.models import CensoredSample, HyperParams, Phase, RampConstantProfile, RandomEffects, TestConfig
from admkit.ode import integrate_damage

logger = logging.getLogger(__name__)


def _fallback_solution(
    fx: RandomEffects, config: TestConfig, board_index: int, settings: AdmSettings
) -> tuple[float, Phase, float]:
    try:
        solution = constant_load_failure_time(fx, config.k, config.tau_c)
    except SolverError as exc:
        raise SimulationError(str(exc), board_index=board_index) from exc
    except NumericalError as exc:
        if not math.isfinite(config.censor_time):
            raise SimulationError(f"no censor horizon for ODE fallback: {exc}", board_index=board_index) from exc
        logger.warning("Board %d: closed form failed (%s); integrating the ODE instead.", board_index, exc)
        tau_s = config.k * ramp_failure_time(fx, config.k)
        solution = integrate_damage(
            fx,
            tau_s,
            RampConstantProfile(k=config.k, tau_c=config.tau_c),
            t_max=config.censor_time,
            step=settings.ode_step_test_hours,
            min_segment_steps=settings.ode_min_segment_steps,
        )
    return solution.failure_time, solution.phase, solution.alpha_at_t0


def simulate_raw_failure_times(
    theta: HyperParams,
    config: TestConfig,
    rng: np.random.Generator,
    n: int | None = None,
    settings: AdmSettings | None = None,
) -> FailureTimes:
    """Uncensored failure times of `n` boards (default `config.n_boards`) under the test profile."""
    size = config.n_boards if n is None else n
    effects = sample_effects_batch(theta, size, rng)
    outcome = constant_load_failure_times(effects, config.k, config.tau_c)
    unsolved = np.flatnonzero(outcome.phases == INVALID_CODE)
    if unsolved.size:
        settings = settings or get_settings()
        for index in unsolved:
            time, phase, alpha_t0 = _fallback_solution(effects.item(int(index)), config, int(index), settings)
            outcome.times[index] = time
            outcome.phases[index] = PHASE_CODES[phase]
            outcome.alpha_t0[index] = alpha_t0
    return outcome


def censor(times: np.ndarray, config: TestConfig) -> CensoredSample:
    times = np.asarray(times, dtype=float)
    failed = np.isfinite(times) & (times <= config.censor_time)
    return CensoredSample(
        times=times[failed].tolist(),
        n_censored=int(np.count_nonzero(~failed)),
        config=config,
    )


def simulate_failure_times(
    theta: HyperParams,
    config: TestConfig,
    rng: np.random.Generator,
    settings: AdmSettings | None = None,
) -> CensoredSample:
    """Simulate `config.n_boards` boards under the ramp-then-hold test and censor at `config.censor_time`."""
    if config.n_boards == 0:
        return CensoredSample(config=config)
    outcome = simulate_raw_failure_times(theta, config, rng, settings=settings)
    return censor(outcome.times, config)


def kde_log_likelihood(
    data: CensoredSample,
    theta: HyperParams,
    n_sim: int,
    rng: np.random.Generator,
    truncated: bool = False,
    settings: AdmSettings | None = None,
) -> float:
    """Brute-force censored log-likelihood of `data` under `theta`.

    A Gaussian KDE (Silverman bandwidth) is fitted to log failure times that
    fall before the censor time; the density is mapped back to hours with the
    1/t Jacobian and scaled by the simulated failure fraction F. Censored
    boards contribute n_c log(1 - F). With `truncated=True` the uncensored
    part is the conditional density f/F instead.
    """
    if data.n_total == 0:
        return 0.0
    config = data.config.model_copy(update={"n_boards": n_sim})
    simulated = simulate_raw_failure_times(theta, config, rng, settings=settings).times
    failed = simulated[np.isfinite(simulated) & (simulated <= config.censor_time)]
    fraction = failed.size / n_sim
    n_observed = len(data.times)

    if n_observed and failed.size < 2:
        return -math.inf
    if data.n_censored and fraction >= 1.0:
        return -math.inf

    total = 0.0
    if n_observed:
        log_observed = np.log(np.asarray(data.times, dtype=float))
        try:
            kde = stats.gaussian_kde(np.log(failed), bw_method="silverman")
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"KDE on simulated failure times is singular: {exc}") from exc
        total += float(np.sum(kde.logpdf(log_observed) - log_observed))
        if not truncated:
            total += n_observed * math.log(fraction)
    if data.n_censored:
        total += data.n_censored * math.log1p(-fraction)
    return total
