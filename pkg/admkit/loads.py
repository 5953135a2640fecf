import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from admkit.errors import DomainError, require_positive
from admkit.models import HOURS_PER_YEAR, LoadModelParams, PiecewiseProfile


@dataclass(frozen=True)
class LoadPath:
    """Normalised load processes over [0, horizon] hours.

    `sustained_breaks[i]` starts an occupancy period at `sustained_levels[i]`;
    `extraordinary_breaks` alternate between episode levels and zero.
    """

    dead: float
    sustained_breaks: np.ndarray
    sustained_levels: np.ndarray
    extraordinary_breaks: np.ndarray
    extraordinary_levels: np.ndarray
    horizon: float

    @property
    def n_episodes(self) -> int:
        return int(np.count_nonzero(self.extraordinary_levels > 0))


def _renewal_durations(mean: float, horizon: float, rng: np.random.Generator) -> np.ndarray:
    block = math.ceil(1.1 * horizon / mean) + 16
    pieces = []
    covered = 0.0
    while covered < horizon:
        draws = rng.exponential(mean, block)
        pieces.append(draws)
        covered += float(draws.sum())
    return np.concatenate(pieces)


def _dead_load(params: LoadModelParams, rng: np.random.Generator) -> float:
    sd = math.sqrt(params.dead_variance)
    while True:
        value = float(rng.normal(params.dead_mean, sd))
        if value >= 0:
            return value


def sample_load_path(params: LoadModelParams, horizon: float, rng: np.random.Generator) -> LoadPath:
    """Draw the dead load, then the sustained process, then the extraordinary process."""
    require_positive(horizon=horizon)
    dead = _dead_load(params, rng)

    durations = _renewal_durations(params.sustained_mean_years * HOURS_PER_YEAR, horizon, rng)
    starts = np.concatenate(([0.0], np.cumsum(durations)[:-1]))
    keep = starts < horizon
    sustained_breaks = starts[keep]
    sustained_levels = rng.gamma(params.sustained_shape, params.sustained_scale, durations.size)[keep]

    gap_mean = params.extraordinary_gap_mean_years * HOURS_PER_YEAR
    episode_mean = params.extraordinary_mean_years * HOURS_PER_YEAR
    block = math.ceil(1.1 * horizon / (gap_mean + episode_mean)) + 16
    breaks = [np.zeros(1)]
    levels = [np.zeros(1)]
    clock = 0.0
    while clock < horizon:
        gaps = rng.exponential(gap_mean, block)
        episodes = rng.exponential(episode_mean, block)
        episode_levels = rng.gamma(params.extraordinary_shape, params.extraordinary_scale, block)
        cycle_ends = clock + np.cumsum(gaps + episodes)
        episode_starts = cycle_ends - episodes
        breaks.append(np.column_stack((episode_starts, cycle_ends)).ravel())
        levels.append(np.column_stack((episode_levels, np.zeros(block))).ravel())
        clock = float(cycle_ends[-1])
    extraordinary_breaks = np.concatenate(breaks)
    extraordinary_levels = np.concatenate(levels)
    keep = extraordinary_breaks < horizon

    return LoadPath(
        dead=dead,
        sustained_breaks=sustained_breaks,
        sustained_levels=sustained_levels,
        extraordinary_breaks=extraordinary_breaks[keep],
        extraordinary_levels=extraordinary_levels[keep],
        horizon=float(horizon),
    )


def normalized_load_segments(path: LoadPath, params: LoadModelParams) -> tuple[np.ndarray, np.ndarray]:
    """Merged breakpoints and gamma * D_d + D_s(t) + D_e(t) on each segment."""
    breaks = np.union1d(path.sustained_breaks, path.extraordinary_breaks)
    sustained = path.sustained_levels[np.searchsorted(path.sustained_breaks, breaks, side="right") - 1]
    extraordinary = path.extraordinary_levels[np.searchsorted(path.extraordinary_breaks, breaks, side="right") - 1]
    return breaks, params.gamma * path.dead + sustained + extraordinary


def load_scale(phi: float, params: LoadModelParams) -> float:
    if not phi >= 0:
        raise DomainError(f"phi must be nonnegative, got {phi!r}.")
    return phi * params.r_o / params.design_denominator


def assemble_load(path: LoadPath, phi: float, params: LoadModelParams) -> PiecewiseProfile:
    breaks, combined = normalized_load_segments(path, params)
    return PiecewiseProfile(breakpoints=breaks, levels=load_scale(phi, params) * combined)


def design_live_load(phi: float, params: LoadModelParams) -> float:
    """Nominal live load d_nl = phi R_o / (gamma alpha_d + alpha_l) in psi."""
    return load_scale(phi, params)


@dataclass(frozen=True)
class LoadMatrix:
    starts: np.ndarray
    durations: np.ndarray
    levels: np.ndarray

    @property
    def max_level(self) -> np.ndarray:
        return np.where(self.durations > 0, self.levels, 0.0).max(axis=1)


def stack_load_paths(paths: list[LoadPath], params: LoadModelParams) -> LoadMatrix:
    segments = [normalized_load_segments(p, params) for p in paths]
    width = max(breaks.size for breaks, _ in segments)
    starts = np.zeros((len(paths), width))
    durations = np.zeros((len(paths), width))
    levels = np.zeros((len(paths), width))
    for row, ((breaks, combined), path) in enumerate(zip(segments, paths)):
        m = breaks.size
        starts[row, :m] = breaks
        starts[row, m:] = path.horizon
        durations[row, :m] = np.diff(np.append(breaks, path.horizon))
        levels[row, :m] = combined
    return LoadMatrix(starts=starts, durations=durations, levels=levels)


def write_load_path(profile: PiecewiseProfile, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame({"t_hours": profile.breakpoints, "tau_psi": profile.levels})
    frame.to_csv(path, index=False, float_format="%.10g")
    return path
