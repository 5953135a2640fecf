"""Canadian accumulated-damage model: damage rate and closed-form failure times.

Damage evolves as

    mu * alpha'(t) = [a tau_s (tau(t)/tau_s - sigma0)+]^b + [c tau_s (tau(t)/tau_s - sigma0)+]^n alpha(t)

with mu = 1 hour. For the ramp-then-hold test profile the ODE has closed-form
solutions; everything below works with logarithms of the power products since
b and n drawn from log-normals routinely push (akT)^b outside float range.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special
from scipy.optimize import elementwise

from admkit.errors import DomainError, NumericalError, SolverError, require_finite, require_positive
from admkit.models import K_STANDARD, DamageSolution, EffectsBatch, Phase, RandomEffects

logger = logging.getLogger(__name__)

MU_HOURS = 1.0
T_MIN_HOURS = 1e-12
T_MAX_HOURS = 1e12
ROOT_RTOL = 1e-10
# 1 - sigma0 at or below this margin never accrues damage
DEGENERATE_MARGIN = 1e-12

_SERIES_BELOW = 1e-280
_SERIES_MAX_TERMS = 2000
# log T tolerance of the batch solve, about 1e-11 relative in T
_LOG_T_ATOL = 1e-11

PHASE_CODES = {Phase.RAMP: 0, Phase.CONSTANT: 1, Phase.SURVIVED: 2}
INVALID_CODE = -1
_PHASE_BY_CODE = {code: phase for phase, code in PHASE_CODES.items()}


def damage_rate(alpha: float, t: float, tau_at_t: float, tau_s: float, fx: RandomEffects) -> float:
    """Right-hand side of the damage ODE in damage per hour.

    `t` only enters through `tau_at_t`; it is validated for finiteness so the
    signature matches a generic ODE right-hand side.
    """
    require_finite(alpha=alpha, t=t, tau_at_t=tau_at_t, tau_s=tau_s)
    require_positive(tau_s=tau_s)
    excess = tau_at_t / tau_s - fx.sigma0
    if excess <= 0:
        return 0.0
    log_excess = math.log(excess)
    first = math.exp(fx.b * (math.log(fx.a * tau_s) + log_excess))
    second = math.exp(fx.n * (math.log(fx.c * tau_s) + log_excess))
    return (first + second * alpha) / MU_HOURS


def lower_incomplete_gamma(s: float, x: float) -> float:
    """Integral of exp(-u) u^(s-1) over [0, x]."""
    if not s > 0:
        raise DomainError(f"s must be positive, got {s!r}.")
    if not x >= 0:
        raise DomainError(f"x must be nonnegative, got {x!r}.")
    if x == 0:
        return 0.0
    return float(special.gammainc(s, x) * special.gamma(s))


def _log_series(s: np.ndarray, x: np.ndarray) -> np.ndarray:
    # gamma(s, x) = x^s e^-x sum_k x^k / (s (s+1) ... (s+k))
    term = 1.0 / s
    total = term.copy()
    for k in range(1, _SERIES_MAX_TERMS):
        term = term * x / (s + k)
        total += term
        if np.all(term <= 1e-17 * total):
            break
    return s * np.log(x) - x + np.log(total)


def log_lower_incomplete_gamma(s: np.ndarray | float, x: np.ndarray | float) -> np.ndarray:
    """log of the lower incomplete gamma function, elementwise.

    Falls back to the power series where the regularised value underflows.
    """
    s_arr, x_arr = np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(x, dtype=float))
    shape = s_arr.shape
    s_arr = np.atleast_1d(s_arr).astype(float)
    x_arr = np.atleast_1d(x_arr).astype(float)
    with np.errstate(divide="ignore", invalid="ignore", under="ignore", over="ignore"):
        regularised = special.gammainc(s_arr, x_arr)
        out = np.log(regularised) + special.gammaln(s_arr)
        small = (regularised < _SERIES_BELOW) & (x_arr > 0) & np.isfinite(x_arr)
        if np.any(small):
            out[small] = _log_series(s_arr[small], x_arr[small])
    return out.reshape(shape)


def _ramp_constants(
    a: np.ndarray, b: np.ndarray, c: np.ndarray, n: np.ndarray, sigma0: np.ndarray, k: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (log G, s, log scale) with u(T) = exp((n + 1) log T + log scale)."""
    log_ak = np.log(a * k)
    log_ck = np.log(c * k)
    log_norm = np.log((n + 1.0) * MU_HOURS)
    log_g = b * log_ak - n * (b + 1.0) / (n + 1.0) * log_ck + (b - n) / (n + 1.0) * log_norm
    s = (b + 1.0) / (n + 1.0)
    with np.errstate(divide="ignore"):
        log_scale = n * log_ck + (n + 1.0) * np.log1p(-sigma0) - log_norm
    return log_g, s, log_scale


def _ramp_residual(
    log_t: np.ndarray, log_g: np.ndarray, s: np.ndarray, n: np.ndarray, log_scale: np.ndarray
) -> np.ndarray:
    with np.errstate(over="ignore", invalid="ignore"):
        u = np.exp((n + 1.0) * log_t + log_scale)
        return log_g + log_lower_incomplete_gamma(s, u) + u


def ramp_failure_time(fx: RandomEffects, k: float) -> float:
    """Failure time in hours of a board ramp-loaded at `k` psi/hour.

    Solves G e^u gamma(s, u) = 1 for T, which is the damage ODE integrated
    along tau = k t. The residual is increasing in T; its root is bracketed by
    doubling from one hour and polished with Brent's method.
    """
    require_positive(k=k)
    if 1.0 - fx.sigma0 <= DEGENERATE_MARGIN:
        return math.inf

    log_g, s, log_scale = _ramp_constants(
        np.float64(fx.a), np.float64(fx.b), np.float64(fx.c), np.float64(fx.n), np.float64(fx.sigma0), k
    )

    def residual(t: float) -> float:
        value = float(_ramp_residual(np.log(t), log_g, s, np.float64(fx.n), log_scale))
        if math.isnan(value):
            raise SolverError(f"ramp residual is undefined at T={t!r} for {fx!r}.", effects=fx)
        return value

    lo = hi = 1.0
    f_one = residual(1.0)
    if f_one == 0:
        return 1.0
    if f_one < 0:
        while residual(hi) < 0:
            lo, hi = hi, hi * 2.0
            if hi > T_MAX_HOURS:
                raise SolverError(f"no ramp failure time below {T_MAX_HOURS:g} h for {fx!r}.", effects=fx)
    else:
        while residual(lo) > 0:
            lo, hi = lo / 2.0, lo
            if lo < T_MIN_HOURS:
                raise SolverError(f"no ramp failure time above {T_MIN_HOURS:g} h for {fx!r}.", effects=fx)
    return float(optimize.brentq(residual, lo, hi, xtol=1e-300, rtol=ROOT_RTOL))


def ramp_failure_times(effects: EffectsBatch, k: float) -> np.ndarray:
    """Vectorised ramp failure times, solved in log T over [1e-12, 1e12] hours.

    Boards whose residual does not change sign on that range come back as NaN;
    boards with sigma0 within `DEGENERATE_MARGIN` of 1 come back as inf.
    """
    require_positive(k=k)
    log_g, s, log_scale = _ramp_constants(effects.a, effects.b, effects.c, effects.n, effects.sigma0, k)
    size = len(effects)
    lo = np.full(size, math.log(T_MIN_HOURS))
    hi = np.full(size, math.log(T_MAX_HOURS))
    f_lo = _ramp_residual(lo, log_g, s, effects.n, log_scale)
    f_hi = _ramp_residual(hi, log_g, s, effects.n, log_scale)
    degenerate = 1.0 - effects.sigma0 <= DEGENERATE_MARGIN
    bracketed = ~degenerate & np.isfinite(f_lo) & np.isfinite(f_hi) & (f_lo <= 0) & (f_hi >= 0)

    times = np.where(degenerate, np.inf, np.nan)
    if np.any(bracketed):
        result = elementwise.find_root(
            _ramp_residual,
            (lo[bracketed], hi[bracketed]),
            args=(log_g[bracketed], s[bracketed], effects.n[bracketed], log_scale[bracketed]),
            tolerances={"xatol": _LOG_T_ATOL},
        )
        times[bracketed] = np.where(result.success, np.exp(result.x), np.nan)
    return times


def short_term_strengths(effects: EffectsBatch, k_s: float = K_STANDARD) -> np.ndarray:
    return k_s * ramp_failure_times(effects, k_s)


@dataclass(frozen=True)
class FailureTimes:
    """Vectorised constant-load test outcome; `phases` holds `PHASE_CODES` values, -1 if unsolved."""

    times: np.ndarray
    phases: np.ndarray
    t_s: np.ndarray
    alpha_t0: np.ndarray

    def __len__(self) -> int:
        return int(self.times.size)

    @property
    def invalid(self) -> np.ndarray:
        return self.phases == INVALID_CODE

    def solution(self, index: int) -> DamageSolution:
        phase = _PHASE_BY_CODE[int(self.phases[index])]
        alpha_t0 = float(self.alpha_t0[index])
        alpha_final = alpha_t0 if phase is Phase.SURVIVED else 1.0
        return DamageSolution(
            failure_time=float(self.times[index]), phase=phase, alpha_at_t0=alpha_t0, alpha_final=alpha_final
        )


def _after_ramp(
    a: np.ndarray,
    b: np.ndarray,
    c: np.ndarray,
    n: np.ndarray,
    sigma0: np.ndarray,
    k: float,
    t_s: np.ndarray,
    t0: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Hold-phase failure time for boards that survive the ramp to T0.

    Returns (failure time, damage at T0, excess x0 = T0/T_s - sigma0).
    """
    with np.errstate(divide="ignore", invalid="ignore", over="ignore", under="ignore"):
        x0 = t0 / t_s - sigma0
        damaging = x0 > 0
        log_x0 = np.log(np.where(damaging, x0, 1.0))
        log_ak_ts = np.log(a * k * t_s)
        log_ck_ts = np.log(c * k * t_s)

        log_g, s, _ = _ramp_constants(a, b, c, n, sigma0, k)
        log_norm = np.log((n + 1.0) * MU_HOURS)
        u0 = np.exp(n * log_ck_ts + np.log(t_s) + (n + 1.0) * log_x0 - log_norm)
        alpha0 = np.exp(log_g + log_lower_incomplete_gamma(s, u0) + u0)
        alpha0 = np.where(damaging, np.clip(alpha0, 0.0, 1.0), 0.0)

        c1 = np.exp(b * (log_ak_ts + log_x0)) / MU_HOURS
        c2 = np.exp(n * (log_ck_ts + log_x0)) / MU_HOURS
        remaining = 1.0 - alpha0
        hold = np.where(
            c2 > 0,
            np.log1p(remaining * c2 / (c1 + alpha0 * c2)) / c2,
            remaining / c1,
        )
        hold = np.where(np.isinf(c1) | np.isinf(c2), 0.0, hold)
        times = np.where(damaging, t0 + hold, np.inf)
    return times, alpha0, x0


def constant_load_failure_times(effects: EffectsBatch, k: float, tau_c: float) -> FailureTimes:
    require_positive(k=k, tau_c=tau_c)
    t_s = ramp_failure_times(effects, k)
    t0 = tau_c / k
    size = len(effects)
    times = np.full(size, np.nan)
    phases = np.full(size, INVALID_CODE, dtype=np.int8)
    alpha_t0 = np.zeros(size)

    unbreakable = np.isposinf(t_s)
    times[unbreakable] = np.inf
    phases[unbreakable] = PHASE_CODES[Phase.SURVIVED]

    solved = np.isfinite(t_s)
    ramp = solved & (t_s <= t0)
    times[ramp] = t_s[ramp]
    phases[ramp] = PHASE_CODES[Phase.RAMP]
    alpha_t0[ramp] = 1.0

    held = solved & ~ramp
    if np.any(held):
        sub = effects.subset(held)
        hold_times, alpha0, _ = _after_ramp(sub.a, sub.b, sub.c, sub.n, sub.sigma0, k, t_s[held], t0)
        times[held] = hold_times
        alpha_t0[held] = alpha0
        codes = np.where(
            np.isposinf(hold_times),
            PHASE_CODES[Phase.SURVIVED],
            np.where(np.isnan(hold_times), INVALID_CODE, PHASE_CODES[Phase.CONSTANT]),
        )
        phases[held] = codes
    return FailureTimes(times=times, phases=phases, t_s=t_s, alpha_t0=alpha_t0)


def constant_load_failure_time(fx: RandomEffects, k: float, tau_c: float) -> DamageSolution:
    """Failure time of one board under a ramp at `k` to `tau_c`, then held.

    `tau_c = inf` reduces to the pure ramp test.
    """
    require_positive(k=k, tau_c=tau_c)
    t_s = ramp_failure_time(fx, k)
    t0 = tau_c / k
    if math.isinf(t_s):
        return DamageSolution(failure_time=math.inf, phase=Phase.SURVIVED, alpha_at_t0=0.0, alpha_final=0.0)
    if t_s <= t0:
        return DamageSolution(failure_time=t_s, phase=Phase.RAMP, alpha_at_t0=1.0)

    arrays = [np.array([v], dtype=float) for v in (fx.a, fx.b, fx.c, fx.n, fx.sigma0)]
    times, alpha0, x0 = _after_ramp(*arrays, k, np.array([t_s]), t0)
    failure_time, alpha_t0, excess = float(times[0]), float(alpha0[0]), float(x0[0])
    if math.isnan(failure_time):
        raise NumericalError(
            f"hold-phase solution undefined for {fx!r}: T_s={t_s!r}, T0={t0!r}, "
            f"x0={excess!r}, alpha(T0)={alpha_t0!r}."
        )
    if math.isinf(failure_time):
        return DamageSolution(
            failure_time=math.inf, phase=Phase.SURVIVED, alpha_at_t0=alpha_t0, alpha_final=alpha_t0
        )
    return DamageSolution(failure_time=failure_time, phase=Phase.CONSTANT, alpha_at_t0=alpha_t0)
