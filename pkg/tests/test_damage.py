import math
import unittest

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special

from admkit.damage import (
    PHASE_CODES,
    constant_load_failure_time,
    constant_load_failure_times,
    damage_rate,
    log_lower_incomplete_gamma,
    lower_incomplete_gamma,
    ramp_failure_time,
    ramp_failure_times,
    short_term_strengths,
)
from admkit.errors import DomainError
from admkit.hierarchy import sample_effects_batch
from admkit.models import K_STANDARD, REFERENCE_THETA, EffectsBatch, Phase, RandomEffects
from admkit.rng import substream

# b == n admits a closed-form ramp failure time
EQUAL_EXPONENTS = RandomEffects(a=2e-6, b=2.0, c=1e-6, n=2.0, sigma0=0.3)


def equal_exponent_ramp_time(fx: RandomEffects, k: float) -> float:
    r = (fx.a / fx.c) ** fx.b
    numerator = (fx.n + 1.0) * math.log1p(1.0 / r)
    denominator = (fx.c * k) ** fx.n * (1.0 - fx.sigma0) ** (fx.n + 1.0)
    return (numerator / denominator) ** (1.0 / (fx.n + 1.0))


class DamageRateTests(unittest.TestCase):
    def test_below_threshold_is_zero(self) -> None:
        fx = RandomEffects(a=1.0, b=2.0, c=1.0, n=1.0, sigma0=0.5)
        self.assertEqual(damage_rate(0.3, 1.0, 0.4, 1.0, fx), 0.0)

    def test_first_term_only_without_damage(self) -> None:
        fx = RandomEffects(a=2.0, b=1.0, c=2.0, n=1.0, sigma0=1e-300)
        self.assertAlmostEqual(damage_rate(0.0, 0.0, 0.5, 1.0, fx), 1.0, places=12)

    def test_both_terms(self) -> None:
        fx = RandomEffects(a=2.0, b=1.0, c=2.0, n=1.0, sigma0=1e-300)
        self.assertAlmostEqual(damage_rate(1.0, 0.0, 0.5, 1.0, fx), 2.0, places=12)

    def test_non_finite_input_is_rejected(self) -> None:
        with self.assertRaises(DomainError):
            damage_rate(math.nan, 0.0, 0.5, 1.0, EQUAL_EXPONENTS)
        with self.assertRaises(DomainError):
            damage_rate(0.0, 0.0, math.inf, 1.0, EQUAL_EXPONENTS)

    def test_large_exponents_do_not_overflow(self) -> None:
        fx = RandomEffects(a=5e-4, b=40.0, c=3e-10, n=0.4, sigma0=0.5)
        value = damage_rate(0.0, 0.0, 0.51 * 6000.0, 6000.0, fx)
        self.assertTrue(math.isfinite(value))
        self.assertGreater(value, 0.0)


class IncompleteGammaTests(unittest.TestCase):
    def test_unit_shape(self) -> None:
        self.assertAlmostEqual(lower_incomplete_gamma(1.0, 2.0), 1.0 - math.exp(-2.0), places=12)

    def test_empty_integral(self) -> None:
        self.assertEqual(lower_incomplete_gamma(3.5, 0.0), 0.0)

    def test_matches_quadrature(self) -> None:
        expected, _ = integrate.quad(lambda u: math.exp(-u) * u**1.5, 0.0, 1.7, epsabs=1e-14, epsrel=1e-13)
        self.assertTrue(math.isclose(lower_incomplete_gamma(2.5, 1.7), expected, rel_tol=1e-10))

    def test_nonpositive_shape_is_rejected(self) -> None:
        with self.assertRaises(DomainError):
            lower_incomplete_gamma(0.0, 1.0)
        with self.assertRaises(DomainError):
            lower_incomplete_gamma(-1.0, 1.0)

    def test_log_version_uses_series_when_regularised_value_underflows(self) -> None:
        value = float(log_lower_incomplete_gamma(2.5, 1e-200))
        self.assertAlmostEqual(value, 2.5 * math.log(1e-200) - math.log(2.5), places=8)

    def test_log_version_matches_direct_value(self) -> None:
        value = float(log_lower_incomplete_gamma(2.5, 1.7))
        self.assertAlmostEqual(value, math.log(lower_incomplete_gamma(2.5, 1.7)), places=12)

    @settings(max_examples=50, deadline=None)
    @given(
        s=st.floats(min_value=0.05, max_value=20.0),
        x=st.floats(min_value=0.0, max_value=50.0),
        dx=st.floats(min_value=0.0, max_value=10.0),
    )
    def test_nondecreasing_in_x(self, s: float, x: float, dx: float) -> None:
        self.assertLessEqual(lower_incomplete_gamma(s, x), lower_incomplete_gamma(s, x + dx) * (1 + 1e-12))

    def test_tends_to_complete_gamma(self) -> None:
        self.assertTrue(math.isclose(lower_incomplete_gamma(2.5, 200.0), special.gamma(2.5), rel_tol=1e-12))


class RampFailureTimeTests(unittest.TestCase):
    def test_equal_exponents_match_closed_form(self) -> None:
        expected = equal_exponent_ramp_time(EQUAL_EXPONENTS, K_STANDARD)
        self.assertTrue(math.isclose(ramp_failure_time(EQUAL_EXPONENTS, K_STANDARD), expected, rel_tol=1e-8))

    def test_vectorised_matches_scalar(self) -> None:
        effects = sample_effects_batch(REFERENCE_THETA, 20, substream(1, "simulate", 0))
        times = ramp_failure_times(effects, K_STANDARD)
        for i in range(len(effects)):
            self.assertTrue(math.isclose(times[i], ramp_failure_time(effects.item(i), K_STANDARD), rel_tol=1e-9))

    def test_short_term_strength_is_rate_times_time(self) -> None:
        effects = EffectsBatch.from_effects([EQUAL_EXPONENTS])
        t_s = ramp_failure_time(EQUAL_EXPONENTS, K_STANDARD)
        self.assertTrue(math.isclose(short_term_strengths(effects)[0], K_STANDARD * t_s, rel_tol=1e-9))

    def test_degenerate_threshold_never_fails(self) -> None:
        fx = EQUAL_EXPONENTS.model_copy(update={"sigma0": 1.0 - 1e-13})
        self.assertEqual(ramp_failure_time(fx, K_STANDARD), math.inf)
        self.assertEqual(ramp_failure_times(EffectsBatch.from_effects([fx]), K_STANDARD)[0], math.inf)

    def test_faster_ramp_fails_sooner(self) -> None:
        slow = ramp_failure_time(EQUAL_EXPONENTS, K_STANDARD)
        self.assertLess(ramp_failure_time(EQUAL_EXPONENTS, 2 * K_STANDARD), slow)


class ConstantLoadTests(unittest.TestCase):
    def setUp(self) -> None:
        self.t_s = ramp_failure_time(EQUAL_EXPONENTS, K_STANDARD)
        self.tau_s = K_STANDARD * self.t_s

    def test_failure_in_ramp(self) -> None:
        solution = constant_load_failure_time(EQUAL_EXPONENTS, K_STANDARD, 2.0 * self.tau_s)
        self.assertEqual(solution.phase, Phase.RAMP)
        self.assertEqual(solution.failure_time, self.t_s)

    def test_load_below_threshold_survives(self) -> None:
        fx = EQUAL_EXPONENTS.model_copy(update={"sigma0": 0.9})
        tau_s = K_STANDARD * ramp_failure_time(fx, K_STANDARD)
        solution = constant_load_failure_time(fx, K_STANDARD, 0.5 * tau_s)
        self.assertEqual(solution.phase, Phase.SURVIVED)
        self.assertEqual(solution.failure_time, math.inf)
        self.assertLess(solution.alpha_at_t0, 1.0)

    def test_failure_under_constant_load(self) -> None:
        solution = constant_load_failure_time(EQUAL_EXPONENTS, K_STANDARD, 0.9 * self.tau_s)
        self.assertEqual(solution.phase, Phase.CONSTANT)
        self.assertGreater(solution.failure_time, 0.9 * self.t_s)
        self.assertGreater(solution.alpha_at_t0, 0.0)
        self.assertLess(solution.alpha_at_t0, 1.0)

    def test_pure_ramp_is_infinite_hold(self) -> None:
        solution = constant_load_failure_time(EQUAL_EXPONENTS, K_STANDARD, math.inf)
        self.assertEqual(solution.phase, Phase.RAMP)
        self.assertTrue(math.isclose(solution.failure_time, self.t_s))

    def test_batch_matches_scalar(self) -> None:
        effects = sample_effects_batch(REFERENCE_THETA, 50, substream(2, "simulate", 0))
        outcome = constant_load_failure_times(effects, K_STANDARD, 4500.0)
        self.assertFalse(outcome.invalid.any())
        for i in range(len(effects)):
            solution = constant_load_failure_time(effects.item(i), K_STANDARD, 4500.0)
            self.assertEqual(outcome.phases[i], PHASE_CODES[solution.phase])
            if math.isfinite(solution.failure_time):
                self.assertTrue(math.isclose(outcome.times[i], solution.failure_time, rel_tol=1e-5))
            else:
                self.assertEqual(outcome.times[i], math.inf)

    def test_higher_load_fails_no_later(self) -> None:
        effects = sample_effects_batch(REFERENCE_THETA, 200, substream(3, "simulate", 0))
        low = constant_load_failure_times(effects, K_STANDARD, 3000.0)
        high = constant_load_failure_times(effects, K_STANDARD, 4500.0)
        valid = ~(low.invalid | high.invalid)
        self.assertTrue(np.all(high.times[valid] <= low.times[valid] * (1 + 1e-9)))

    def test_degenerate_threshold_batch_is_survived(self) -> None:
        fx = EQUAL_EXPONENTS.model_copy(update={"sigma0": 1.0 - 1e-13})
        outcome = constant_load_failure_times(EffectsBatch.from_effects([fx]), K_STANDARD, 4500.0)
        self.assertEqual(outcome.solution(0).phase, Phase.SURVIVED)
        self.assertEqual(outcome.times[0], math.inf)


if __name__ == "__main__":
    unittest.main()
