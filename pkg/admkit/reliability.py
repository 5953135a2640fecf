"""Posterior-predictive reliability under residential loads: phi-beta curves and K_D.

Every replicate draws its random effects and its load path from substream
(seed, "reliability", draw, chunk), and that one sample serves every phi on
the grid and, under common coupling, both the DOL and the no-DOL criterion.
Failure probabilities are therefore coupled across phi and across modes.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np
import pandas as pd
from scipy import optimize, special

from admkit.config import get_settings
from admkit.damage import short_term_strengths
from admkit.errors import CurveRangeError, DomainError, IntegrationError
from admkit.hierarchy import sample_effects_batch
from admkit.loads import LoadMatrix, load_scale, sample_load_path, stack_load_paths
from admkit.models import (
    HOURS_PER_YEAR,
    K_STANDARD,
    EffectsBatch,
    FailureProbability,
    HyperParams,
    KdResult,
    LoadModelParams,
    PiecewiseProfile,
    ReliabilityPoint,
)
from admkit.ode import integrate_damage, integrate_piecewise_exact
from admkit.rng import substream

logger = logging.getLogger(__name__)

Mode = Literal["dol", "nodol"]
MODES: tuple[Mode, ...] = ("dol", "nodol")
_MODE_KEYS = {"dol": 0, "nodol": 1}
DEFAULT_HORIZON_HOURS = 30 * HOURS_PER_YEAR

CURVE_COLUMNS = ["phi", "p_f", "beta", "beta_lo", "beta_hi", "mode"]
KD_COLUMNS = ["beta_target", "phi1", "phi2", "kd", "kd_lo", "kd_hi"]


@dataclass(frozen=True)
class ReliabilityOptions:
    params: LoadModelParams = field(default_factory=LoadModelParams)
    k_s: float = K_STANDARD
    integrator: Literal["exact", "adams_bashforth"] = "exact"
    ode_step: float | None = None
    chunk_size: int | None = None
    coupling: Literal["common", "independent"] = "common"
    threads: int = 1


@dataclass(frozen=True)
class _Chunk:
    effects: EffectsBatch
    tau_s: np.ndarray
    loads: LoadMatrix


def _sample_chunk(
    theta: HyperParams, size: int, horizon: float, rng: np.random.Generator, options: ReliabilityOptions
) -> _Chunk:
    effects = sample_effects_batch(theta, size, rng)
    tau_s = short_term_strengths(effects, options.k_s)
    paths = [sample_load_path(options.params, horizon, rng) for _ in range(size)]
    return _Chunk(effects=effects, tau_s=tau_s, loads=stack_load_paths(paths, options.params))


def _dol_times(chunk: _Chunk, scale: float, horizon: float, options: ReliabilityOptions) -> np.ndarray:
    loads = chunk.loads
    if options.integrator == "exact":
        tau_s = np.where(np.isnan(chunk.tau_s), np.inf, chunk.tau_s)
        outcome = integrate_piecewise_exact(chunk.effects, tau_s, loads.starts, loads.durations, scale * loads.levels)
        return outcome.times

    step = options.ode_step or get_settings().ode_step_service_hours
    times = np.full(len(chunk.effects), np.inf)
    for i, tau_s in enumerate(chunk.tau_s):
        if not math.isfinite(tau_s) or scale == 0:
            continue
        width = int(np.count_nonzero(loads.durations[i] > 0))
        profile = PiecewiseProfile(breakpoints=loads.starts[i, :width], levels=scale * loads.levels[i, :width])
        try:
            times[i] = integrate_damage(chunk.effects.item(i), float(tau_s), profile, horizon, step).failure_time
        except IntegrationError as exc:
            logger.warning("Replicate %d: integration failed (%s); marking it invalid.", i, exc)
            times[i] = np.nan
    return times


def _nodol_times(chunk: _Chunk, scale: float) -> np.ndarray:
    """First time the load exceeds tau_s, inf if it never does."""
    loads = chunk.loads
    exceeds = (scale * loads.levels > chunk.tau_s[:, None]) & (loads.durations > 0)
    first = np.argmax(exceeds, axis=1)
    hit = exceeds[np.arange(first.size), first]
    return np.where(hit, loads.starts[np.arange(first.size), first], np.inf)


def _draw_outcomes(
    theta: HyperParams,
    draw: int,
    phis: list[float],
    n_rep: int,
    horizon: float,
    seed: int,
    modes: tuple[Mode, ...],
    options: ReliabilityOptions,
) -> dict[Mode, np.ndarray]:
    """Failure times, shape (len(phis), n_rep), per mode; NaN marks invalid replicates."""
    chunk_size = options.chunk_size or get_settings().reliability_chunk_size
    scales = [load_scale(phi, options.params) for phi in phis]
    out = {mode: np.empty((len(phis), n_rep)) for mode in modes}

    for c, begin in enumerate(range(0, n_rep, chunk_size)):
        size = min(chunk_size, n_rep - begin)
        shared: _Chunk | None = None
        for mode in modes:
            if options.coupling == "common":
                if shared is None:
                    shared = _sample_chunk(theta, size, horizon, substream(seed, "reliability", draw, c), options)
                chunk = shared
            else:
                rng = substream(seed, "reliability", draw, c, _MODE_KEYS[mode])
                chunk = _sample_chunk(theta, size, horizon, rng, options)
            invalid = np.isnan(chunk.tau_s)
            for row, scale in enumerate(scales):
                times = _dol_times(chunk, scale, horizon, options) if mode == "dol" else _nodol_times(chunk, scale)
                times[invalid] = np.nan
                out[mode][row, begin : begin + size] = times
            if invalid.any():
                logger.warning(
                    "Draw %d chunk %d: %d replicate(s) without a short-term strength.", draw, c, int(invalid.sum())
                )
    logger.debug("Draw %d done.", draw)
    return out


def _run_draws(
    theta_draws: list[HyperParams],
    phis: list[float],
    n_rep: int,
    horizon: float,
    seed: int,
    modes: tuple[Mode, ...],
    options: ReliabilityOptions,
) -> list[dict[Mode, np.ndarray]]:
    if not theta_draws:
        raise DomainError("at least one posterior draw is required.")
    if n_rep < 1 or not horizon > 0:
        raise DomainError("n_rep must be at least 1 and horizon positive.")

    def work(draw: int) -> dict[Mode, np.ndarray]:
        return _draw_outcomes(theta_draws[draw], draw, phis, n_rep, horizon, seed, modes, options)

    if options.threads <= 1:
        return [work(i) for i in range(len(theta_draws))]
    with ThreadPoolExecutor(max_workers=options.threads) as pool:
        return list(pool.map(work, range(len(theta_draws))))


def simulate_time_to_failure(
    theta_draws: list[HyperParams],
    phi: float,
    n_rep: int,
    horizon: float = DEFAULT_HORIZON_HOURS,
    seed: int = 0,
    options: ReliabilityOptions | None = None,
) -> list[np.ndarray]:
    """Per-draw failure times in hours under the DOL model; inf survived, NaN invalid."""
    options = options or ReliabilityOptions()
    outcomes = _run_draws(theta_draws, [phi], n_rep, horizon, seed, ("dol",), options)
    return [o["dol"][0] for o in outcomes]


def failure_probability(samples: list[np.ndarray], horizon: float = DEFAULT_HORIZON_HOURS) -> FailureProbability:
    """Fraction of valid replicates failing by `horizon`, per draw and pooled over draws."""
    if not samples or any(np.asarray(s).size == 0 for s in samples):
        raise DomainError("failure probability needs nonempty samples.")
    per_draw = []
    failures = valid = invalid = 0
    for sample in samples:
        times = np.asarray(sample, dtype=float)
        ok = ~np.isnan(times)
        n_ok = int(ok.sum())
        n_fail = int(np.count_nonzero(times[ok] <= horizon))
        per_draw.append(n_fail / n_ok if n_ok else math.nan)
        failures += n_fail
        valid += n_ok
        invalid += times.size - n_ok
    pooled = failures / valid if valid else math.nan
    return FailureProbability(per_draw=per_draw, pooled=pooled, n_invalid=invalid)


def reliability_index(p_f: float) -> float:
    """beta = -Phi^-1(p_f); inf at 0 and -inf at 1."""
    if not 0.0 <= p_f <= 1.0:
        raise DomainError(f"p_f must lie in [0, 1], got {p_f!r}.")
    return 0.0 - float(special.ndtri(p_f))


def no_dol_failure(
    theta_draws: list[HyperParams],
    phi: float,
    n_rep: int,
    horizon: float = DEFAULT_HORIZON_HOURS,
    seed: int = 0,
    options: ReliabilityOptions | None = None,
) -> list[float]:
    """Per-draw probability that the peak load exceeds the short-term strength k_s T_s."""
    options = options or ReliabilityOptions()
    outcomes = _run_draws(theta_draws, [phi], n_rep, horizon, seed, ("nodol",), options)
    return failure_probability([o["nodol"][0] for o in outcomes], horizon).per_draw


def _point(phi: float, samples: list[np.ndarray], horizon: float, mode: Mode) -> ReliabilityPoint:
    probability = failure_probability(samples, horizon)
    per_draw = [p for p in probability.per_draw if not math.isnan(p)]
    p_f = probability.pooled
    if math.isnan(p_f):
        raise DomainError(f"no valid replicates at phi={phi!r}.")
    p_lo, p_hi = np.percentile(per_draw, [2.5, 97.5])
    return ReliabilityPoint(
        phi=phi,
        p_f=p_f,
        beta=reliability_index(p_f),
        per_draw_p_f=probability.per_draw,
        beta_lo=reliability_index(float(p_hi)),
        beta_hi=reliability_index(float(p_lo)),
        mode=mode,
        n_invalid=probability.n_invalid,
    )


def reliability_curves(
    theta_draws: list[HyperParams],
    phi_grid: list[float],
    n_rep: int,
    horizon: float = DEFAULT_HORIZON_HOURS,
    seed: int = 0,
    modes: tuple[Mode, ...] = MODES,
    options: ReliabilityOptions | None = None,
) -> dict[Mode, list[ReliabilityPoint]]:
    options = options or ReliabilityOptions()
    if not phi_grid or any(b <= a for a, b in zip(phi_grid, phi_grid[1:])):
        raise DomainError("phi_grid must be nonempty and strictly ascending.")
    outcomes = _run_draws(theta_draws, list(phi_grid), n_rep, horizon, seed, modes, options)
    curves: dict[Mode, list[ReliabilityPoint]] = {}
    for mode in modes:
        curves[mode] = [
            _point(phi, [o[mode][row] for o in outcomes], horizon, mode) for row, phi in enumerate(phi_grid)
        ]
        if curves[mode][0].n_invalid:
            logger.warning("%s curve: %d invalid replicate(s) excluded.", mode, curves[mode][0].n_invalid)
    return curves


def phi_beta_curve(
    theta_draws: list[HyperParams],
    phi_grid: list[float],
    n_rep: int,
    horizon: float = DEFAULT_HORIZON_HOURS,
    mode: Mode = "dol",
    seed: int = 0,
    options: ReliabilityOptions | None = None,
) -> list[ReliabilityPoint]:
    return reliability_curves(theta_draws, phi_grid, n_rep, horizon, seed, (mode,), options)[mode]


def _phi_at_beta(phis: np.ndarray, betas: np.ndarray, beta_target: float, name: str, warn: bool = True) -> float:
    """Invert a monotone fit of beta(phi) at `beta_target`."""
    finite = np.isfinite(betas)
    if warn and not finite.all():
        logger.warning("%s curve: %d point(s) with infinite beta excluded.", name, int((~finite).sum()))
    if finite.sum() < 2:
        raise CurveRangeError(f"{name} curve has fewer than two points with finite beta.")
    fitted = optimize.isotonic_regression(betas[finite], increasing=False).x
    lo, hi = float(fitted.min()), float(fitted.max())
    if not lo <= beta_target <= hi:
        raise CurveRangeError(f"beta={beta_target} lies outside the {name} curve range [{lo:.4f}, {hi:.4f}].")
    levels, inverse = np.unique(fitted, return_inverse=True)
    phi_means = np.bincount(inverse, weights=phis[finite]) / np.bincount(inverse)
    return float(np.interp(beta_target, levels, phi_means))


def _pooled(curve: list[ReliabilityPoint]) -> tuple[np.ndarray, np.ndarray]:
    return np.array([p.phi for p in curve]), np.array([p.beta for p in curve])


def _per_draw(curve: list[ReliabilityPoint], draw: int) -> np.ndarray:
    betas = []
    for point in curve:
        p = point.per_draw_p_f[draw]
        betas.append(math.nan if math.isnan(p) else reliability_index(p))
    return np.array(betas)


def k_d_factor(
    curve_dol: list[ReliabilityPoint], curve_nodol: list[ReliabilityPoint], beta_target: float
) -> KdResult:
    """K_D = phi_2 / phi_1 at `beta_target`, with phi_1 from the no-DOL curve and phi_2 from the DOL curve.

    The point estimate is the mean of the per-draw ratios and the interval their
    2.5% and 97.5% percentiles; draws whose own curves miss the target are skipped.
    """
    phi_1 = _phi_at_beta(*_pooled(curve_nodol), beta_target, "no-DOL")
    phi_2 = _phi_at_beta(*_pooled(curve_dol), beta_target, "DOL")

    phis_nodol, _ = _pooled(curve_nodol)
    phis_dol, _ = _pooled(curve_dol)
    n_draws = min(len(curve_dol[0].per_draw_p_f), len(curve_nodol[0].per_draw_p_f))
    ratios = []
    for draw in range(n_draws):
        try:
            draw_phi_1 = _phi_at_beta(phis_nodol, _per_draw(curve_nodol, draw), beta_target, "no-DOL", warn=False)
            draw_phi_2 = _phi_at_beta(phis_dol, _per_draw(curve_dol, draw), beta_target, "DOL", warn=False)
        except CurveRangeError:
            continue
        ratios.append(draw_phi_2 / draw_phi_1)

    if not ratios:
        k_d = phi_2 / phi_1
        logger.warning("beta=%g: no single draw brackets the target; K_D interval collapses.", beta_target)
        return KdResult(beta_target=beta_target, phi_1=phi_1, phi_2=phi_2, k_d=k_d, interval=(k_d, k_d))

    k_d = float(np.mean(ratios))
    lo, hi = (float(v) for v in np.percentile(ratios, [2.5, 97.5]))
    return KdResult(
        beta_target=beta_target,
        phi_1=phi_1,
        phi_2=phi_2,
        k_d=k_d,
        interval=(min(lo, k_d), max(hi, k_d)),
        n_draws_used=len(ratios),
    )


def curve_frame(curves: dict[Mode, list[ReliabilityPoint]]) -> pd.DataFrame:
    rows = [
        {"phi": p.phi, "p_f": p.p_f, "beta": p.beta, "beta_lo": p.beta_lo, "beta_hi": p.beta_hi, "mode": p.mode}
        for mode in curves
        for p in curves[mode]
    ]
    return pd.DataFrame(rows, columns=CURVE_COLUMNS)


def kd_frame(results: list[KdResult]) -> pd.DataFrame:
    rows = [
        {
            "beta_target": r.beta_target,
            "phi1": r.phi_1,
            "phi2": r.phi_2,
            "kd": r.k_d,
            "kd_lo": r.interval[0],
            "kd_hi": r.interval[1],
        }
        for r in results
    ]
    return pd.DataFrame(rows, columns=KD_COLUMNS)


def failure_histogram(times: np.ndarray, years: float = 100.0, bins: int = 100) -> pd.DataFrame:
    """Counts of failure times (converted to years) in equal bins over [0, years]."""
    values = np.asarray(times, dtype=float) / HOURS_PER_YEAR
    values = values[np.isfinite(values) & (values <= years)]
    counts, edges = np.histogram(values, bins=bins, range=(0.0, years))
    return pd.DataFrame({"year_lo": edges[:-1], "year_hi": edges[1:], "count": counts})


def write_frame(frame: pd.DataFrame, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.10g")
    return path
