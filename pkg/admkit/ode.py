import logging
import math
from collections import deque
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from admkit.damage import MU_HOURS
from admkit.errors import IntegrationError, require_finite, require_positive
from admkit.models import DamageSolution, EffectsBatch, Phase, PiecewiseProfile, RampConstantProfile, RandomEffects

logger = logging.getLogger(__name__)

# five-step Adams-Bashforth weights, newest first, over 720
_AB5 = (1901.0, -2774.0, 2616.0, -1274.0, 251.0)
_BOOTSTRAP_STEPS = 4

Rate = Callable[[float, float], float]


def _rate_for(fx: RandomEffects, tau_s: float, load: Callable[[float], float]) -> Rate:
    log_a = math.log(fx.a * tau_s)
    log_c = math.log(fx.c * tau_s)
    b, n, sigma0 = fx.b, fx.n, fx.sigma0

    def rate(t: float, alpha: float) -> float:
        excess = load(t) / tau_s - sigma0
        if excess <= 0:
            return 0.0
        log_excess = math.log(excess)
        return (math.exp(b * (log_a + log_excess)) + math.exp(n * (log_c + log_excess)) * alpha) / MU_HOURS

    return rate


def _integrate_segment(
    rate: Rate, start: float, end: float, alpha: float, step: float, min_steps: int
) -> tuple[float, float | None]:
    """Advance alpha over [start, end]; returns (alpha at end, crossing time or None)."""
    n_steps = max(math.ceil((end - start) / step), min_steps)
    h = (end - start) / n_steps
    t = start
    # the load at `end` belongs to the next segment
    last = math.nextafter(end, start)

    def inside(t: float, alpha: float) -> float:
        return rate(min(t, last), alpha)

    history: deque[float] = deque([inside(t, alpha)], maxlen=len(_AB5))

    for i in range(n_steps):
        if i < _BOOTSTRAP_STEPS:
            k1 = history[-1]
            k2 = inside(t + 0.5 * h, alpha + 0.5 * h * k1)
            k3 = inside(t + 0.5 * h, alpha + 0.5 * h * k2)
            k4 = inside(t + h, alpha + h * k3)
            alpha_next = alpha + h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
        else:
            increment = sum(w * f for w, f in zip(_AB5, reversed(history)))
            alpha_next = alpha + h * increment / 720.0
        t_next = start + (i + 1) * h

        if not math.isfinite(alpha_next):
            raise IntegrationError(f"damage became non-finite at t={t_next!r} h (step {h!r} h).")
        if alpha_next >= 1.0:
            fraction = (1.0 - alpha) / (alpha_next - alpha)
            return 1.0, t + fraction * h
        alpha, t = alpha_next, t_next
        history.append(inside(t, alpha))
    return alpha, None


def _ramp_constant_segments(
    fx: RandomEffects, tau_s: float, profile: RampConstantProfile, t_max: float
) -> tuple[list[float], Callable[[float], float]]:
    ramp_end = profile.ramp_end
    threshold_time = fx.sigma0 * tau_s / profile.k
    edges = sorted({0.0, t_max, *(e for e in (threshold_time, ramp_end) if 0.0 < e < t_max)})
    k, tau_c = profile.k, profile.tau_c

    def load(t: float) -> float:
        return k * t if t < ramp_end else tau_c

    return edges, load


def _piecewise_segments(profile: PiecewiseProfile, t_max: float) -> tuple[list[float], Callable[[float], float]]:
    inner = [float(t) for t in profile.breakpoints if 0.0 < t < t_max]
    return [0.0, *inner, t_max], profile.level_at


def integrate_damage(
    fx: RandomEffects,
    tau_s: float,
    profile: RampConstantProfile | PiecewiseProfile,
    t_max: float,
    step: float,
    min_segment_steps: int = 1,
) -> DamageSolution:
    """Integrate the damage ODE from alpha(0) = 0 with a fixed-step AB5 scheme.

    The multistep history restarts at every profile breakpoint, each segment
    is bootstrapped with four RK4 steps, and segments whose load never exceeds
    sigma0 * tau_s are skipped since the rate is identically zero there. A
    segment is split into max(ceil(length / step), min_segment_steps) equal steps.
    """
    require_finite(tau_s=tau_s, step=step)
    if not step > 0:
        raise IntegrationError(f"step must be positive, got {step!r}.")
    require_positive(tau_s=tau_s, t_max=t_max)

    if isinstance(profile, RampConstantProfile):
        edges, load = _ramp_constant_segments(fx, tau_s, profile, t_max)
        ramp_end = profile.ramp_end
    else:
        edges, load = _piecewise_segments(profile, t_max)
        ramp_end = 0.0
    rate = _rate_for(fx, tau_s, load)
    threshold = fx.sigma0 * tau_s

    alpha = 0.0
    alpha_at_t0 = 0.0
    ramp_done = False
    for start, end in zip(edges[:-1], edges[1:]):
        if not ramp_done and start >= ramp_end:
            alpha_at_t0, ramp_done = alpha, True
        if load(0.5 * (start + end)) <= threshold:
            continue
        alpha, crossing = _integrate_segment(rate, start, end, alpha, step, min_segment_steps)
        if crossing is not None:
            phase = Phase.RAMP if crossing <= ramp_end else Phase.CONSTANT
            at_t0 = 1.0 if phase is Phase.RAMP else alpha_at_t0
            return DamageSolution(failure_time=crossing, phase=phase, alpha_at_t0=at_t0, alpha_final=1.0)

    if not ramp_done:
        alpha_at_t0 = alpha
    return DamageSolution(failure_time=math.inf, phase=Phase.SURVIVED, alpha_at_t0=alpha_at_t0, alpha_final=alpha)


@dataclass(frozen=True)
class PiecewiseOutcome:
    """Per-replicate failure times (inf if survived) and damage at the end of the path."""

    times: np.ndarray
    alpha: np.ndarray


def integrate_piecewise_exact(
    effects: EffectsBatch,
    tau_s: np.ndarray,
    starts: np.ndarray,
    durations: np.ndarray,
    levels: np.ndarray,
) -> PiecewiseOutcome:
    """Exact damage under piecewise-constant loads, one row per replicate.

    On a segment of constant load the ODE is alpha' = C1 + C2 alpha, so with
    z = C2 * dt the update is alpha e^z + C1 dt expm1(z) / z. Rows are padded
    to a common column count with zero-duration segments.
    """
    starts = np.asarray(starts, dtype=float)
    durations = np.asarray(durations, dtype=float)
    levels = np.asarray(levels, dtype=float)
    tau_s = np.asarray(tau_s, dtype=float)
    n_rep = len(effects)
    if starts.shape != durations.shape or starts.shape != levels.shape or starts.shape[0] != n_rep:
        raise IntegrationError("starts, durations and levels must share shape (n_rep, n_segments).")

    alpha = np.zeros(n_rep)
    times = np.full(n_rep, np.inf)
    alive = np.isfinite(tau_s) & (tau_s > 0)

    with np.errstate(divide="ignore", invalid="ignore", over="ignore", under="ignore"):
        log_a = np.log(effects.a * tau_s)
        log_c = np.log(effects.c * tau_s)
        for j in range(starts.shape[1]):
            excess = levels[:, j] / tau_s - effects.sigma0
            dt = durations[:, j]
            active = alive & (excess > 0) & (dt > 0)
            if not np.any(active):
                continue
            log_excess = np.log(np.where(active, excess, 1.0))
            c1 = np.exp(effects.b * (log_a + log_excess)) / MU_HOURS
            c2 = np.exp(effects.n * (log_c + log_excess)) / MU_HOURS
            z = c2 * dt
            growth = np.where(z > 0, np.expm1(z) / z, 1.0)
            carried = np.where(alpha > 0, alpha * np.exp(z), 0.0)
            # c1 can underflow to 0 while expm1(z) / z overflows
            alpha_end = carried + np.where(c1 > 0, c1 * dt * growth, 0.0)

            failed = active & ~(alpha_end < 1.0)
            if np.any(failed):
                remaining = 1.0 - alpha
                to_fail = np.where(
                    c2 > 0,
                    np.log1p(remaining * c2 / (c1 + alpha * c2)) / c2,
                    remaining / c1,
                )
                to_fail = np.where(np.isinf(c1) | np.isinf(c2), 0.0, to_fail)
                times = np.where(failed, starts[:, j] + np.minimum(to_fail, dt), times)
                alpha = np.where(failed, 1.0, alpha)
                alive = alive & ~failed
            alpha = np.where(active & ~failed, alpha_end, alpha)

    if np.any(np.isnan(alpha)):
        raise IntegrationError("damage became non-finite in the piecewise-exact integrator.")
    return PiecewiseOutcome(times=times, alpha=alpha)
