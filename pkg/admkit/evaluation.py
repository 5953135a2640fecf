import logging
import math
from collections.abc import Callable

import numpy as np
import pandas as pd
from scipy import stats

from admkit.errors import AdmError
from admkit.hierarchy import log_prior
from admkit.models import THETA_FIELDS, CensoredSample, ChainDraw, HyperParams, PriorSpec, TestConfig
from admkit.rng import substream
from admkit.simulate import kde_log_likelihood, simulate_raw_failure_times

logger = logging.getLogger(__name__)

LogLikelihood = Callable[[list[CensoredSample], HyperParams], float]
ORACLE_COLUMNS = ["rank", "label", "draw", "iteration", *THETA_FIELDS, "log_likelihood", "log_posterior"]


def kde_oracle(n_sim: int, seed: int) -> LogLikelihood:
    """Summed KDE log-likelihood over datasets; dataset d always uses stream (seed, "oracle", d)."""

    def log_likelihood(datasets: list[CensoredSample], theta: HyperParams) -> float:
        return sum(
            kde_log_likelihood(data, theta, n_sim, substream(seed, "oracle", d)) for d, data in enumerate(datasets)
        )

    return log_likelihood


def select_draws(draws: list[ChainDraw], indices: list[int] | None = None, max_draws: int | None = None) -> list[int]:
    if indices is not None:
        return [i for i in indices if 0 <= i < len(draws)]
    if max_draws is None or max_draws >= len(draws):
        return list(range(len(draws)))
    if max_draws == 0:
        return []
    return sorted({int(i) for i in np.linspace(0, len(draws) - 1, max_draws).round()})


def _row(label: str, draw: int | None, iteration: int | None, theta: HyperParams, ll: float, prior: PriorSpec) -> dict:
    return {
        "label": label,
        "draw": draw,
        "iteration": iteration,
        **theta.model_dump(),
        "log_likelihood": ll,
        "log_posterior": ll + log_prior(theta, prior),
    }


def evaluate_draws(
    draws: list[ChainDraw],
    datasets: list[CensoredSample],
    log_likelihood: LogLikelihood,
    selection: list[int] | None = None,
    theta_true: HyperParams | None = None,
    prior: PriorSpec | None = None,
) -> pd.DataFrame:
    """Ranked table of log-likelihood and log-posterior per selected draw, true theta on top."""
    prior = prior or PriorSpec()
    selection = list(range(len(draws))) if selection is None else selection
    rows = []
    for index in selection:
        draw = draws[index]
        try:
            ll = log_likelihood(datasets, draw.theta)
        except AdmError as exc:
            logger.warning("Draw %d: log-likelihood failed (%s); recording -inf.", index, exc)
            ll = -math.inf
        rows.append(_row("draw", index, draw.iteration, draw.theta, ll, prior))

    frame = pd.DataFrame(rows, columns=ORACLE_COLUMNS[1:])
    if not frame.empty:
        frame = frame.sort_values("log_likelihood", ascending=False, kind="stable").reset_index(drop=True)
    if theta_true is not None:
        true_row = _row("true", None, None, theta_true, log_likelihood(datasets, theta_true), prior)
        frame = pd.concat([pd.DataFrame([true_row], columns=ORACLE_COLUMNS[1:]), frame], ignore_index=True)
    frame.insert(0, "rank", np.arange(len(frame)))
    return frame


def _mean(values: list[float]) -> float:
    return sum(values) / len(values) if values else 0.0


def oracle_metrics(frame: pd.DataFrame, band_width: float = 110.0, band_above: float = 10.0) -> dict[str, float]:
    """95% range of the finite draw log-likelihoods and the share inside [true - band_width, true + band_above]."""
    draws = frame.loc[frame["label"] == "draw", "log_likelihood"].astype(float)
    finite = [v for v in draws.tolist() if math.isfinite(v)]
    metrics: dict[str, float] = {
        "n_draws": float(len(draws)),
        "finite_rate": round(len(finite) / len(draws), 4) if len(draws) else 0.0,
        "mean_log_likelihood": _mean(finite),
    }
    if finite:
        lo, hi = np.percentile(finite, [2.5, 97.5])
        metrics["ll_q025"] = float(lo)
        metrics["ll_q975"] = float(hi)
        metrics["ll_range_width"] = float(hi - lo)
    true_rows = frame.loc[frame["label"] == "true", "log_likelihood"]
    if len(true_rows) and len(draws):
        true_ll = float(true_rows.iloc[0])
        inside = (draws >= true_ll - band_width) & (draws <= true_ll + band_above)
        metrics["true_log_likelihood"] = true_ll
        metrics["band_fraction"] = round(float(inside.mean()), 4)
    return metrics


CURVE_COLUMNS = ["dataset", "rank", "label", "time", "cdf", "density"]
BAND_COLUMNS = [
    "dataset",
    "time",
    "observed_cdf",
    "cdf_mean",
    "cdf_lo",
    "cdf_hi",
    "density_mean",
    "density_lo",
    "density_hi",
]


def time_grid(data: CensoredSample, points: int = 200) -> np.ndarray | None:
    times = np.asarray(data.times, dtype=float)
    times = times[times > 0]
    if times.size == 0:
        return None
    hi = data.config.censor_time if math.isfinite(data.config.censor_time) else 2.0 * float(times.max())
    return np.geomspace(float(times.min()) / 2.0, hi, points)


def observed_cdf(data: CensoredSample, grid: np.ndarray) -> np.ndarray:
    return np.searchsorted(np.sort(data.times), grid, side="right") / data.n_total


def simulated_curves(
    theta: HyperParams, config: TestConfig, n_sim: int, rng: np.random.Generator, grid: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Failure-time CDF and density under `theta` on `grid`, from `n_sim` simulated boards.

    Both are sub-distributions: the CDF counts failures before t among all
    boards, and the density is the KDE of log failure times scaled by the
    failure fraction, as in `kde_log_likelihood`. The density is NaN when
    fewer than two boards fail.
    """
    design = config.model_copy(update={"n_boards": n_sim})
    simulated = simulate_raw_failure_times(theta, design, rng).times
    failed = np.sort(simulated[np.isfinite(simulated) & (simulated <= design.censor_time)])
    cdf = np.searchsorted(failed, grid, side="right") / n_sim
    density = np.full(grid.shape, np.nan)
    if failed.size >= 2:
        try:
            kde = stats.gaussian_kde(np.log(failed), bw_method="silverman")
        except np.linalg.LinAlgError:
            return cdf, density
        density = failed.size / n_sim * kde(np.log(grid)) / grid
    return cdf, density


def _band(rows: list[np.ndarray], size: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if not rows:
        empty = np.full(size, np.nan)
        return empty, empty, empty
    block = np.vstack(rows)
    lo, hi = np.percentile(block, [2.5, 97.5], axis=0)
    return block.mean(axis=0), lo, hi


def fit_curves(
    frame: pd.DataFrame, datasets: list[CensoredSample], n_sim: int, seed: int, points: int = 200
) -> tuple[pd.DataFrame, pd.DataFrame]:
    """Plot-ready fit curves for the rows of a ranked oracle table.

    Returns one long frame with the simulated CDF and density of every row on
    each dataset's time grid, and one frame of equal-tailed 95% bands over the
    "draw" rows next to the observed empirical CDF. Dataset d uses the same
    stream as the oracle, so curves line up with the ranked log-likelihoods.
    """
    members = [
        (int(row["rank"]), str(row["label"]), HyperParams(**{name: row[name] for name in THETA_FIELDS}))
        for row in frame.to_dict("records")
    ]
    curves: list[pd.DataFrame] = []
    bands: list[pd.DataFrame] = []
    for d, data in enumerate(datasets):
        grid = time_grid(data, points)
        if grid is None:
            logger.warning("Dataset %d has no uncensored failures; skipping its fit curves.", d)
            continue
        draw_cdfs: list[np.ndarray] = []
        draw_densities: list[np.ndarray] = []
        for rank, label, theta in members:
            try:
                cdf, density = simulated_curves(theta, data.config, n_sim, substream(seed, "oracle", d), grid)
            except AdmError as exc:
                logger.warning("Rank %d on dataset %d: simulation failed (%s); no curve.", rank, d, exc)
                continue
            curves.append(
                pd.DataFrame({"dataset": d, "rank": rank, "label": label, "time": grid, "cdf": cdf, "density": density})
            )
            if label == "draw":
                draw_cdfs.append(cdf)
                if np.all(np.isfinite(density)):
                    draw_densities.append(density)
        cdf_mean, cdf_lo, cdf_hi = _band(draw_cdfs, grid.size)
        density_mean, density_lo, density_hi = _band(draw_densities, grid.size)
        bands.append(
            pd.DataFrame(
                {
                    "dataset": d,
                    "time": grid,
                    "observed_cdf": observed_cdf(data, grid),
                    "cdf_mean": cdf_mean,
                    "cdf_lo": cdf_lo,
                    "cdf_hi": cdf_hi,
                    "density_mean": density_mean,
                    "density_lo": density_lo,
                    "density_hi": density_hi,
                }
            )
        )
    curve_frame = pd.concat(curves, ignore_index=True) if curves else pd.DataFrame(columns=CURVE_COLUMNS)
    band_frame = pd.concat(bands, ignore_index=True) if bands else pd.DataFrame(columns=BAND_COLUMNS)
    return curve_frame, band_frame
