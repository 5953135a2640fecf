import math
import unittest

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from admkit.errors import CurveRangeError, DomainError
from admkit.models import HOURS_PER_YEAR, REFERENCE_THETA, ReliabilityPoint
from admkit.reliability import (
    ReliabilityOptions,
    curve_frame,
    failure_histogram,
    failure_probability,
    k_d_factor,
    kd_frame,
    no_dol_failure,
    phi_beta_curve,
    reliability_curves,
    reliability_index,
    simulate_time_to_failure,
)

FIVE_YEARS = 5 * HOURS_PER_YEAR


def curve(phis: list[float], betas: list[float], mode: str, per_draw: list[list[float]] | None = None):
    """Reliability points whose pooled and per-draw beta are given directly."""
    points = []
    for i, (phi, beta) in enumerate(zip(phis, betas)):
        p_f = float(special.ndtr(-beta))
        draws = [float(special.ndtr(-b[i])) for b in per_draw] if per_draw else [p_f]
        points.append(
            ReliabilityPoint(
                phi=phi, p_f=p_f, beta=beta, per_draw_p_f=draws, beta_lo=beta, beta_hi=beta, mode=mode
            )
        )
    return points


class ReliabilityIndexTests(unittest.TestCase):
    def test_median(self) -> None:
        self.assertEqual(reliability_index(0.5), 0.0)

    def test_three_sigma(self) -> None:
        self.assertAlmostEqual(reliability_index(0.0013499), 3.000, places=3)

    def test_endpoints(self) -> None:
        self.assertEqual(reliability_index(0.0), math.inf)
        self.assertEqual(reliability_index(1.0), -math.inf)

    def test_out_of_range_is_rejected(self) -> None:
        with self.assertRaises(DomainError):
            reliability_index(1.5)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(min_value=-6.0, max_value=6.0))
    def test_inverts_the_normal_tail(self, beta: float) -> None:
        self.assertAlmostEqual(reliability_index(float(special.ndtr(-beta))), beta, delta=1e-6)


class FailureProbabilityTests(unittest.TestCase):
    def test_all_survived(self) -> None:
        self.assertEqual(failure_probability([np.full(10, np.inf)], 100.0).pooled, 0.0)

    def test_all_failed(self) -> None:
        self.assertEqual(failure_probability([np.full(10, 5.0)], 100.0).pooled, 1.0)

    def test_invalid_replicates_are_excluded(self) -> None:
        result = failure_probability([np.array([1.0, np.nan, np.inf, 200.0]), np.array([50.0, 60.0])], 100.0)
        self.assertEqual(result.per_draw, [1 / 3, 1.0])
        self.assertEqual(result.pooled, 3 / 5)
        self.assertEqual(result.n_invalid, 1)

    def test_empty_samples_are_rejected(self) -> None:
        with self.assertRaises(DomainError):
            failure_probability([])


class SimulationTests(unittest.TestCase):
    def test_zero_phi_never_fails(self) -> None:
        samples = simulate_time_to_failure([REFERENCE_THETA], 0.0, 20, FIVE_YEARS, seed=1)
        self.assertEqual(failure_probability(samples, FIVE_YEARS).pooled, 0.0)
        self.assertEqual(no_dol_failure([REFERENCE_THETA], 0.0, 20, FIVE_YEARS, seed=1), [0.0])

    def test_dominant_thresholds_never_fail(self) -> None:
        theta = REFERENCE_THETA.model_copy(update={"mu_sigma0": 12.0})
        samples = simulate_time_to_failure([theta], 1.0, 20, FIVE_YEARS, seed=2)
        self.assertEqual(failure_probability(samples, FIVE_YEARS).pooled, 0.0)

    def test_thread_count_does_not_change_results(self) -> None:
        thetas = [REFERENCE_THETA] * 3
        serial = simulate_time_to_failure(thetas, 3.0, 30, FIVE_YEARS, seed=3)
        threaded = simulate_time_to_failure(thetas, 3.0, 30, FIVE_YEARS, seed=3, options=ReliabilityOptions(threads=3))
        for a, b in zip(serial, threaded):
            np.testing.assert_array_equal(a, b)

    def test_common_numbers_order_the_curves(self) -> None:
        phis = [0.5, 1.5, 3.0]
        curves = reliability_curves([REFERENCE_THETA] * 2, phis, 200, FIVE_YEARS, seed=4)
        for mode in ("dol", "nodol"):
            p_f = [point.p_f for point in curves[mode]]
            self.assertEqual(p_f, sorted(p_f))
            self.assertEqual([point.phi for point in curves[mode]], phis)
            for point in curves[mode]:
                self.assertLessEqual(point.beta_lo, point.beta_hi)

    def test_single_mode_curve_matches_joint_run(self) -> None:
        phis = [1.0, 2.0]
        joint = reliability_curves([REFERENCE_THETA], phis, 50, FIVE_YEARS, seed=5)
        alone = phi_beta_curve([REFERENCE_THETA], phis, 50, FIVE_YEARS, mode="dol", seed=5)
        self.assertEqual([p.p_f for p in alone], [p.p_f for p in joint["dol"]])

    def test_adams_bashforth_agrees_with_exact(self) -> None:
        horizon = HOURS_PER_YEAR
        exact = simulate_time_to_failure([REFERENCE_THETA], 3.0, 10, horizon, seed=6)[0]
        stepped = simulate_time_to_failure(
            [REFERENCE_THETA], 3.0, 10, horizon, seed=6, options=ReliabilityOptions(integrator="adams_bashforth")
        )[0]
        np.testing.assert_array_equal(np.isfinite(exact), np.isfinite(stepped))
        finite = np.isfinite(exact)
        np.testing.assert_allclose(stepped[finite], exact[finite], rtol=1e-3, atol=1.0)

    def test_unsorted_grid_is_rejected(self) -> None:
        with self.assertRaises(DomainError):
            reliability_curves([REFERENCE_THETA], [2.0, 1.0], 10, FIVE_YEARS)


class DurationFactorTests(unittest.TestCase):
    def test_identical_curves(self) -> None:
        phis = [0.5, 1.0, 1.5, 2.0]
        betas = [4.0, 3.2, 2.6, 2.0]
        per_draw = [[4.1, 3.3, 2.7, 2.1], [3.9, 3.1, 2.5, 1.9]]
        for beta_target in (2.5, 3.0, 3.5):
            result = k_d_factor(
                curve(phis, betas, "dol", per_draw), curve(phis, betas, "nodol", per_draw), beta_target
            )
            self.assertAlmostEqual(result.k_d, 1.0, places=9)
            self.assertAlmostEqual(result.interval[0], 1.0, places=9)
            self.assertEqual(result.n_draws_used, 2)

    def test_ratio_of_crossing_points(self) -> None:
        nodol = curve([1.0, 1.93, 3.0], [3.5, 2.5, 1.5], "nodol")
        dol = curve([1.0, 1.37, 3.0], [3.0, 2.5, 1.0], "dol")
        result = k_d_factor(dol, nodol, 2.5)
        self.assertAlmostEqual(result.phi_1, 1.93, places=6)
        self.assertAlmostEqual(result.phi_2, 1.37, places=6)
        self.assertAlmostEqual(result.k_d, 1.37 / 1.93, places=6)
        self.assertAlmostEqual(result.k_d, 0.71, delta=0.005)

    def test_single_point_curve_is_a_range_error(self) -> None:
        single = curve([1.0], [3.0], "dol")
        with self.assertRaises(CurveRangeError):
            k_d_factor(single, single, 3.0)

    def test_target_outside_range_names_the_curve(self) -> None:
        nodol = curve([1.0, 2.0], [3.0, 2.0], "nodol")
        dol = curve([1.0, 2.0], [2.8, 1.5], "dol")
        with self.assertRaisesRegex(CurveRangeError, "no-DOL"):
            k_d_factor(dol, nodol, 3.5)

    def test_infinite_beta_is_excluded_with_a_warning(self) -> None:
        phis = [0.5, 1.0, 1.5, 2.0]
        betas = [math.inf, 3.2, 2.6, 2.0]
        with self.assertLogs("admkit.reliability", level="WARNING"):
            result = k_d_factor(curve(phis, betas, "dol"), curve(phis, betas, "nodol"), 2.5)
        self.assertAlmostEqual(result.k_d, 1.0, places=9)

    def test_frames(self) -> None:
        phis = [0.5, 1.0]
        curves = {"dol": curve(phis, [3.0, 2.0], "dol"), "nodol": curve(phis, [3.5, 2.5], "nodol")}
        frame = curve_frame(curves)
        self.assertEqual(list(frame.columns), ["phi", "p_f", "beta", "beta_lo", "beta_hi", "mode"])
        self.assertEqual(len(frame), 4)
        self.assertEqual(list(kd_frame([]).columns), ["beta_target", "phi1", "phi2", "kd", "kd_lo", "kd_hi"])


class HistogramTests(unittest.TestCase):
    def test_counts_failures_within_range(self) -> None:
        times = np.array([0.5, 1.5, 1.7, 150.0, np.inf, np.nan]) * HOURS_PER_YEAR
        frame = failure_histogram(times, years=100.0, bins=100)
        self.assertEqual(int(frame["count"].sum()), 3)
        self.assertEqual(int(frame.loc[1, "count"]), 2)


if __name__ == "__main__":
    unittest.main()
