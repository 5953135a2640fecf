import argparse
import logging
import sys
from pathlib import Path

from admkit.abc_mcmc import bandwidth_grid, calibrate_bandwidth, read_chain, run_chain, summary_scales, write_chain
from admkit.config import COMMANDS, RunConfig, get_settings, load_run_config
from admkit.datasets import phase_breakdown, read_dataset, write_dataset
from admkit.errors import ConfigError, CurveRangeError, NumericalError
from admkit.evaluation import evaluate_draws, fit_curves, kde_oracle, oracle_metrics, select_draws
from admkit.loads import assemble_load, sample_load_path, write_load_path
from admkit.models import HOURS_PER_YEAR, ChainConfig, HyperParams, KdResult
from admkit.reliability import (
    MODES,
    ReliabilityOptions,
    curve_frame,
    failure_histogram,
    k_d_factor,
    kd_frame,
    reliability_curves,
    simulate_time_to_failure,
    write_frame,
)
from admkit.rng import substream
from admkit.simulate import censor, simulate_raw_failure_times

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

FULL_SCALE_REPLICATES = 100_000


def cmd_simulate(config: RunConfig) -> list[Path]:
    section = config.simulate
    written = []
    for index, spec in enumerate(section.datasets):
        design = section.test_config(spec)
        outcome = simulate_raw_failure_times(section.theta, design, substream(config.seed, "simulate", index))
        sample = censor(outcome.times, design)
        csv_path, _ = write_dataset(sample, config.output_dir / f"{spec.name}.csv")
        counts = phase_breakdown(outcome, design)
        print(
            f"{spec.name}: {design.n_boards} boards, {counts['ramp']} failed in ramp, "
            f"{counts['constant']} failed under constant load, {counts['censored']} censored"
        )
        written.append(csv_path)
    return written


def cmd_fit(config: RunConfig) -> Path:
    section = config.fit
    settings = get_settings()
    datasets = [read_dataset(path) for path in section.datasets]
    chain_config = ChainConfig(
        datasets=datasets,
        delta=section.delta or 1.0,
        burn_in=section.burn_in,
        thin=section.thin,
        n_draws=section.n_draws,
        proposal=section.proposal,
        prior=section.prior,
        initial_theta=section.initial_theta,
        seed=config.seed,
        standardize=section.standardize,
        pilot_replicates=section.pilot_replicates or settings.pilot_replicates,
        progress_every=settings.progress_every,
    )
    scales = summary_scales(
        chain_config.initial_theta,
        datasets,
        chain_config.pilot_replicates,
        chain_config.seed,
        chain_config.standardize,
    )
    chain_config = chain_config.model_copy(update={"summary_scales": [s.tolist() for s in scales]})

    if section.calibrate is not None:
        calibration_section = section.calibrate
        candidates = calibration_section.candidates or bandwidth_grid(
            calibration_section.start, calibration_section.stop, calibration_section.num
        )
        calibration = calibrate_bandwidth(
            candidates, calibration_section.pilot_iterations, chain_config, calibration_section.target_rate
        )
        print(f"Calibrated delta: {calibration.delta:g} (qualified: {calibration.qualified})")
        chain_config = chain_config.model_copy(update={"delta": calibration.delta})

    result = run_chain(chain_config)
    path = write_chain(result, chain_config, config.output_dir / section.output)
    print(f"Chain: {len(result.draws)} draws, acceptance {result.acceptance_rate:.4f} -> {path}")
    return path


def cmd_oracle(config: RunConfig) -> list[Path]:
    section = config.oracle
    settings = get_settings()
    _, draws = read_chain(section.chain)
    datasets = [read_dataset(path) for path in section.datasets]
    selection = select_draws(draws, section.draws, section.max_draws)
    n_sim = section.n_sim or settings.kde_n_sim
    log_likelihood = kde_oracle(n_sim, config.seed)
    frame = evaluate_draws(draws, datasets, log_likelihood, selection, section.theta_true, section.prior)
    written = [write_frame(frame, config.output_dir / section.output)]

    if section.fit_curves:
        curves, bands = fit_curves(frame, datasets, section.curve_n_sim or n_sim, config.seed, section.curve_points)
        written.append(write_frame(curves, config.output_dir / section.curve_output))
        written.append(write_frame(bands, config.output_dir / section.band_output))

    print("Oracle Metrics")
    for key, value in oracle_metrics(frame, section.band_width, section.band_above).items():
        print(f"- {key}: {value}")
    return written


def _reliability_thetas(config: RunConfig) -> list[HyperParams]:
    section = config.reliability
    if section.thetas is not None:
        return list(section.thetas)
    _, draws = read_chain(section.chain)
    n_draws = None if section.full_scale else section.n_draws
    return [draws[i].theta for i in select_draws(draws, max_draws=n_draws)]


def cmd_reliability(config: RunConfig) -> list[Path]:
    section = config.reliability
    thetas = _reliability_thetas(config)
    n_rep = FULL_SCALE_REPLICATES if section.full_scale else section.n_rep
    horizon = section.horizon_years * HOURS_PER_YEAR
    options = ReliabilityOptions(
        params=section.load_model,
        k_s=section.k,
        integrator=section.integrator,
        ode_step=section.ode_step_hours,
        chunk_size=section.chunk_size,
        coupling=section.coupling,
        threads=config.threads,
    )
    logger.info(
        "Reliability: %d draw(s) x %d replicate(s) over %d phi value(s).", len(thetas), n_rep, len(section.phi_grid)
    )
    curves = reliability_curves(thetas, section.phi_grid, n_rep, horizon, config.seed, MODES, options)
    written = [write_frame(curve_frame(curves), config.output_dir / section.curve_output)]

    if section.dump_load_path:
        phi = section.histogram_phi if section.histogram_phi is not None else section.phi_grid[-1]
        path = sample_load_path(section.load_model, horizon, substream(config.seed, "dump", 0))
        profile = assemble_load(path, phi, section.load_model)
        written.append(write_load_path(profile, config.output_dir / "load_path.csv"))

    if section.histogram_phi is not None:
        times = simulate_time_to_failure(
            thetas[:1], section.histogram_phi, n_rep, section.histogram_years * HOURS_PER_YEAR, config.seed, options
        )[0]
        histogram = failure_histogram(times, section.histogram_years)
        written.append(write_frame(histogram, config.output_dir / "failure_histogram.csv"))

    results: list[KdResult] = []
    failures: list[CurveRangeError] = []
    for beta_target in section.beta_targets:
        try:
            results.append(k_d_factor(curves["dol"], curves["nodol"], beta_target))
        except CurveRangeError as exc:
            logger.error("K_D at beta=%g: %s", beta_target, exc)
            failures.append(exc)
    written.append(write_frame(kd_frame(results), config.output_dir / section.kd_output))
    for result in results:
        print(
            f"beta={result.beta_target:g}: phi1={result.phi_1:.4f} phi2={result.phi_2:.4f} "
            f"K_D={result.k_d:.4f} ({result.interval[0]:.4f}, {result.interval[1]:.4f})"
        )
    if failures:
        raise failures[0]
    return written


_HANDLERS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "oracle": cmd_oracle,
    "reliability": cmd_reliability,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="admkit", description="Accumulated-damage model fitting and duration-of-load reliability."
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="Path to the TOML run file.")
    parser.add_argument("--threads", type=int, default=None, help="Worker threads (overrides the run file).")
    parser.add_argument("--seed", type=int, default=None, help="Root seed (overrides the run file).")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    settings = get_settings()
    try:
        config = load_run_config(args.config, args.command, seed=args.seed, threads=args.threads)
    except ConfigError as exc:
        logging.basicConfig(level=settings.log_level.upper())
        logger.error("%s", exc)
        return EXIT_CONFIG

    logging.basicConfig(
        level=(config.log_level or settings.log_level).upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        _HANDLERS[args.command](config)
    except ConfigError as exc:
        logger.error("%s", exc)
        return EXIT_CONFIG
    except NumericalError as exc:
        logger.error("Numerical failure: %s", exc)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
