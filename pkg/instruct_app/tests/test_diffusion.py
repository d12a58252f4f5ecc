import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from instruct_app.diffusion import (LOG_UNIFORM_TIMES, DiffusionSchedule, WeightingFn, alpha_sigma, conditional_score,
                                    sample_times, sample_transition, sigma_to_time, tweedie_denoise, weighting)
from instruct_app.exceptions import ShapeMismatchError, TimeWindowError
from instruct_app.utils.rng import make_rng


class ScheduleTests(SimpleTestCase):

    def setUp(self):
        self.ve = DiffusionSchedule(kind=DiffusionSchedule.VE, t_min=1e-3, T=10.0)
        self.vp = DiffusionSchedule(kind=DiffusionSchedule.VP, beta_min=0.1, beta_max=20.0, t_min=1e-3, T=1.0)

    def test_defaults(self):
        ve = DiffusionSchedule()
        self.assertEqual(ve.T, 10.0)
        self.assertAlmostEqual(ve.sigma_max, np.sqrt(10.0))
        self.assertEqual(DiffusionSchedule(kind=DiffusionSchedule.VP).T, 1.0)
        self.assertEqual(DiffusionSchedule(sigma_max=3.0).T, 9.0)

    def test_invalid_windows(self):
        with self.assertRaises(ValidationError):
            DiffusionSchedule(t_min=0.0)
        with self.assertRaises(ValidationError):
            DiffusionSchedule(t_min=1.0, T=0.5)
        with self.assertRaises(ValidationError):
            DiffusionSchedule(kind='sub-VP')

    def test_ve_coefficients(self):
        alpha, sigma = alpha_sigma(self.ve, 4.0)
        self.assertEqual(float(alpha), 1.0)
        self.assertEqual(float(sigma), 2.0)

    def test_vp_coefficients_at_horizon(self):
        alpha, _ = alpha_sigma(self.vp, 1.0)
        self.assertAlmostEqual(float(alpha), np.exp(-0.5 * (0.1 + 20.0) / 2.0), places=12)

    def test_vp_preserves_variance(self):
        times = np.linspace(self.vp.t_min, self.vp.T, 50)
        alpha, sigma = alpha_sigma(self.vp, times)
        np.testing.assert_allclose(alpha ** 2 + sigma ** 2, 1.0, atol=1e-12)
        self.assertTrue(np.all(np.diff(alpha) < 0))

    def test_times_outside_window(self):
        for t in (0.0, 5e-4, 10.5, np.nan):
            with self.subTest(t=t):
                with self.assertRaises(TimeWindowError):
                    alpha_sigma(self.ve, t)
        with self.assertRaises(TimeWindowError):
            alpha_sigma(self.ve, np.array([1.0, 11.0]))

    def test_sample_times_stay_in_window(self):
        times = sample_times(self.ve, make_rng(0), 10000)
        self.assertGreaterEqual(times.min(), self.ve.t_min)
        self.assertLessEqual(times.max(), self.ve.T)
        self.assertAlmostEqual(times.mean(), (self.ve.t_min + self.ve.T) / 2, delta=0.15)

    def test_log_uniform_times(self):
        times = sample_times(self.ve, make_rng(1), 20000, LOG_UNIFORM_TIMES)
        self.assertGreaterEqual(times.min(), self.ve.t_min)
        self.assertLessEqual(times.max(), self.ve.T)
        # four decades, so half the draws fall below t = 0.1
        self.assertAlmostEqual(float(np.mean(times < 0.1)), 0.5, delta=0.02)
        self.assertAlmostEqual(float(np.mean(np.log(times))), np.log(0.1), delta=0.08)

    def test_unknown_time_sampling(self):
        with self.assertRaises(ValueError):
            sample_times(self.ve, make_rng(0), 10, 'beta')


class TransitionTests(SimpleTestCase):

    def setUp(self):
        self.ve = DiffusionSchedule(kind=DiffusionSchedule.VE, t_min=1e-3, T=10.0)

    def test_sample_transition(self):
        x_t = sample_transition(self.ve, np.array([1.0, 1.0]), 4.0, np.array([0.5, -0.5]))
        np.testing.assert_allclose(x_t, [2.0, 0.0])

    def test_per_row_times(self):
        x0 = np.zeros((2, 1))
        noise = np.ones((2, 1))
        x_t = sample_transition(self.ve, x0, np.array([1.0, 4.0]), noise)
        np.testing.assert_allclose(x_t, [[1.0], [2.0]])

    def test_mismatched_shapes(self):
        with self.assertRaises(ShapeMismatchError):
            sample_transition(self.ve, np.zeros(2), 1.0, np.zeros(3))
        with self.assertRaises(ShapeMismatchError):
            sample_transition(self.ve, np.zeros((3, 1)), np.array([1.0, 2.0]), np.zeros((3, 1)))

    def test_gaussian_marginals(self):
        n = 100000
        mean, var = np.array([0.5, -1.0]), 0.25
        vp = DiffusionSchedule(kind=DiffusionSchedule.VP)
        for sched, t in ((self.ve, 2.0), (vp, 0.5)):
            with self.subTest(kind=sched.kind):
                rng = make_rng(11)
                x0 = mean + np.sqrt(var) * rng.standard_normal((n, 2))
                x_t = sample_transition(sched, x0, t, rng.standard_normal((n, 2)))
                alpha, sigma = (float(c) for c in alpha_sigma(sched, t))
                marginal_var = alpha ** 2 * var + sigma ** 2
                mean_se = np.sqrt(marginal_var / n)
                var_se = marginal_var * np.sqrt(2.0 / (n - 1))
                np.testing.assert_array_less(np.abs(x_t.mean(axis=0) - alpha * mean), 3.0 * mean_se)
                np.testing.assert_array_less(np.abs(x_t.var(axis=0, ddof=1) - marginal_var), 3.0 * var_se)

    def test_conditional_score(self):
        score = conditional_score(self.ve, np.array([0.0]), np.array([1.0]), 2.0)
        np.testing.assert_allclose(score, [-0.5])

    def test_conditional_score_is_minus_noise_over_sigma(self):
        rng = make_rng(4)
        vp = DiffusionSchedule(kind=DiffusionSchedule.VP)
        x0 = rng.standard_normal((5, 2))
        noise = rng.standard_normal((5, 2))
        t = np.full(5, 0.3)
        _, sigma = alpha_sigma(vp, 0.3)
        x_t = sample_transition(vp, x0, t, noise)
        np.testing.assert_allclose(conditional_score(vp, x0, x_t, t), -noise / sigma, rtol=1e-10)

    def test_tweedie_denoise(self):
        np.testing.assert_allclose(tweedie_denoise(self.ve, np.array([2.0]), 1.0, np.array([-1.0])), [1.0])

    def test_tweedie_inverts_the_exact_gaussian_score(self):
        # data N(m, 0): the diffused score at x_t is (m - x_t) / t, so Tweedie recovers m
        m = np.array([0.7, -1.3])
        x_t = np.array([2.0, 0.5])
        score = (m - x_t) / 3.0
        np.testing.assert_allclose(tweedie_denoise(self.ve, x_t, 3.0, score), m)


class WeightingTests(SimpleTestCase):

    def test_ramp(self):
        ramp = WeightingFn(WeightingFn.RAMP)
        np.testing.assert_allclose(weighting(ramp, np.array([0.5, 1.0, 4.0])), [0.5, 1.0, 0.25])

    def test_constant_scales(self):
        self.assertEqual(float(weighting(WeightingFn(WeightingFn.CONSTANT, 2.5), 7.0)), 2.5)

    def test_sigma_squared(self):
        ve = DiffusionSchedule(T=10.0)
        self.assertAlmostEqual(float(weighting(WeightingFn(WeightingFn.SIGMA_SQUARED), 4.0, ve)), 4.0)
        with self.assertRaises(ValueError):
            weighting(WeightingFn(WeightingFn.SIGMA_SQUARED), 4.0)

    def test_nonpositive_time(self):
        with self.assertRaises(ValueError):
            weighting(WeightingFn(), 0.0)

    def test_unknown_kind(self):
        with self.assertRaises(ValidationError):
            WeightingFn('cosine')


class SigmaToTimeTests(SimpleTestCase):

    def test_ve(self):
        self.assertAlmostEqual(sigma_to_time(DiffusionSchedule(T=10.0), 2.5), 6.25)

    def test_vp_inverts_sigma(self):
        vp = DiffusionSchedule(kind=DiffusionSchedule.VP)
        t = sigma_to_time(vp, 0.8)
        _, sigma = alpha_sigma(vp, t)
        self.assertAlmostEqual(float(sigma), 0.8, places=10)

    def test_out_of_range(self):
        with self.assertRaises(ValueError):
            sigma_to_time(DiffusionSchedule(kind=DiffusionSchedule.VP), 1.0)
        with self.assertRaises(TimeWindowError):
            sigma_to_time(DiffusionSchedule(T=4.0), 2.5)
