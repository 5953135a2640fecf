import math
import unittest

import numpy as np

from admkit.damage import constant_load_failure_time, ramp_failure_time
from admkit.errors import IntegrationError
from admkit.models import K_STANDARD, EffectsBatch, Phase, PiecewiseProfile, RampConstantProfile, RandomEffects
from admkit.ode import integrate_damage, integrate_piecewise_exact

FX = RandomEffects(a=2e-6, b=2.0, c=1e-6, n=2.0, sigma0=0.3)


class AdamsBashforthTests(unittest.TestCase):
    def setUp(self) -> None:
        self.t_s = ramp_failure_time(FX, K_STANDARD)
        self.tau_s = K_STANDARD * self.t_s

    def test_zero_load_survives_undamaged(self) -> None:
        profile = PiecewiseProfile(breakpoints=np.array([0.0]), levels=np.array([0.0]))
        solution = integrate_damage(FX, self.tau_s, profile, t_max=1000.0, step=1.0)
        self.assertEqual(solution.phase, Phase.SURVIVED)
        self.assertEqual(solution.failure_time, math.inf)
        self.assertEqual(solution.alpha_final, 0.0)

    def test_pure_ramp_matches_closed_form(self) -> None:
        solution = integrate_damage(
            FX, self.tau_s, RampConstantProfile(k=K_STANDARD), t_max=2 * self.t_s, step=self.t_s / 5000
        )
        self.assertEqual(solution.phase, Phase.RAMP)
        self.assertTrue(math.isclose(solution.failure_time, self.t_s, rel_tol=1e-4))

    def test_ramp_then_hold_matches_closed_form(self) -> None:
        tau_c = 0.9 * self.tau_s
        expected = constant_load_failure_time(FX, K_STANDARD, tau_c)
        solution = integrate_damage(
            FX,
            self.tau_s,
            RampConstantProfile(k=K_STANDARD, tau_c=tau_c),
            t_max=100 * self.t_s,
            step=1e-3,
            min_segment_steps=2000,
        )
        self.assertEqual(solution.phase, Phase.CONSTANT)
        self.assertTrue(math.isclose(solution.failure_time, expected.failure_time, rel_tol=1e-4))
        self.assertTrue(math.isclose(solution.alpha_at_t0, expected.alpha_at_t0, rel_tol=1e-4))

    def test_hold_below_threshold_survives(self) -> None:
        tau_c = 0.2 * self.tau_s
        solution = integrate_damage(
            FX, self.tau_s, RampConstantProfile(k=K_STANDARD, tau_c=tau_c), t_max=1000.0, step=0.5
        )
        self.assertEqual(solution.phase, Phase.SURVIVED)
        self.assertEqual(solution.alpha_final, 0.0)

    def test_nonpositive_step_is_rejected(self) -> None:
        profile = RampConstantProfile(k=K_STANDARD)
        for step in (0.0, -1.0):
            with self.assertRaises(IntegrationError):
                integrate_damage(FX, self.tau_s, profile, t_max=1.0, step=step)


class PiecewiseExactTests(unittest.TestCase):
    def setUp(self) -> None:
        self.tau_s = K_STANDARD * ramp_failure_time(FX, K_STANDARD)
        self.breakpoints = np.array([0.0, 1.0, 3.0])
        self.levels = np.array([0.35, 0.4, 0.32]) * self.tau_s

    def _exact(self, t_max: float):
        starts = self.breakpoints[None, :]
        durations = np.diff(np.append(self.breakpoints, t_max))[None, :]
        return integrate_piecewise_exact(
            EffectsBatch.from_effects([FX]), np.array([self.tau_s]), starts, durations, self.levels[None, :]
        )

    def test_survivor_damage_agrees_with_adams_bashforth(self) -> None:
        profile = PiecewiseProfile(breakpoints=self.breakpoints, levels=self.levels)
        solution = integrate_damage(FX, self.tau_s, profile, t_max=5.0, step=0.01)
        outcome = self._exact(5.0)
        self.assertEqual(solution.phase, Phase.SURVIVED)
        self.assertEqual(outcome.times[0], math.inf)
        self.assertGreater(outcome.alpha[0], 0.0)
        self.assertTrue(math.isclose(solution.alpha_final, outcome.alpha[0], rel_tol=1e-8))

    def test_failure_time_agrees_with_adams_bashforth(self) -> None:
        profile = PiecewiseProfile(breakpoints=self.breakpoints, levels=self.levels)
        solution = integrate_damage(FX, self.tau_s, profile, t_max=2000.0, step=0.5)
        outcome = self._exact(2000.0)
        self.assertEqual(solution.phase, Phase.CONSTANT)
        self.assertTrue(math.isfinite(outcome.times[0]))
        self.assertTrue(math.isclose(solution.failure_time, outcome.times[0], rel_tol=1e-4))
        self.assertEqual(outcome.alpha[0], 1.0)

    def test_padding_and_unbreakable_rows_are_ignored(self) -> None:
        effects = EffectsBatch.from_effects([FX, FX])
        starts = np.array([[0.0, 10.0, 10.0], [0.0, 10.0, 10.0]])
        durations = np.array([[10.0, 0.0, 0.0], [10.0, 0.0, 0.0]])
        levels = np.array([[0.35, 50.0, 50.0], [0.35, 50.0, 50.0]]) * self.tau_s
        outcome = integrate_piecewise_exact(effects, np.array([self.tau_s, np.inf]), starts, durations, levels)
        self.assertTrue(np.all(np.isinf(outcome.times)))
        self.assertEqual(outcome.alpha[1], 0.0)

    def test_mismatched_shapes_are_rejected(self) -> None:
        with self.assertRaises(IntegrationError):
            integrate_piecewise_exact(
                EffectsBatch.from_effects([FX]),
                np.array([self.tau_s]),
                np.zeros((1, 2)),
                np.zeros((1, 3)),
                np.zeros((1, 2)),
            )

# C2 * h is of order one at the test steps, so truncation error sits well above rounding
STIFF = RandomEffects(a=1e-6, b=2.0, c=1e-5, n=2.0, sigma0=0.3)
STIFF_TAU_S = 1e6


def exact_alpha(fx: RandomEffects, tau_s: float, breakpoints: np.ndarray, levels: np.ndarray, t_max: float) -> float:
    durations = np.diff(np.append(breakpoints, t_max))
    outcome = integrate_piecewise_exact(
        EffectsBatch.from_effects([fx]), np.array([tau_s]), breakpoints[None, :], durations[None, :], levels[None, :]
    )
    return float(outcome.alpha[0])


class SegmentBoundaryTests(unittest.TestCase):
    def test_last_step_uses_the_segment_load(self) -> None:
        tau_s = K_STANDARD * ramp_failure_time(FX, K_STANDARD)
        breakpoints = np.array([0.0, 1.0])
        levels = np.array([0.35, 0.40]) * tau_s
        solution = integrate_damage(FX, tau_s, PiecewiseProfile(breakpoints=breakpoints, levels=levels), 1.0, 0.5)
        expected = exact_alpha(FX, tau_s, breakpoints[:1], levels[:1], 1.0)
        self.assertTrue(math.isclose(solution.alpha_final, expected, rel_tol=1e-8))

    def test_halving_the_step_gains_fourth_order(self) -> None:
        breakpoints = np.array([0.0, 0.5, 1.0, 1.5])
        levels = np.array([0.35, 0.40, 0.35, 0.40]) * STIFF_TAU_S
        profile = PiecewiseProfile(breakpoints=breakpoints, levels=levels)
        expected = exact_alpha(STIFF, STIFF_TAU_S, breakpoints, levels, 2.0)
        errors = [
            abs(integrate_damage(STIFF, STIFF_TAU_S, profile, t_max=2.0, step=step).alpha_final - expected)
            for step in (0.5, 0.25, 0.125)
        ]
        self.assertGreater(errors[0], 0.0)
        for coarse, fine in zip(errors, errors[1:]):
            self.assertLess(fine, coarse / 8.0 + 1e-15)


class UnderflowTests(unittest.TestCase):
    def test_zero_first_term_with_overflowing_growth_is_not_a_failure(self) -> None:
        # (a tau_s excess)^b underflows to 0 while (c tau_s excess)^n overflows
        fx = RandomEffects(a=1e-10, b=40.0, c=1e10, n=40.0, sigma0=0.1)
        outcome = integrate_piecewise_exact(
            EffectsBatch.from_effects([fx]), np.array([1.0]), np.zeros((1, 1)), np.ones((1, 1)), np.full((1, 1), 0.6)
        )
        self.assertEqual(outcome.times[0], math.inf)
        self.assertEqual(outcome.alpha[0], 0.0)



if __name__ == "__main__":
    unittest.main()
