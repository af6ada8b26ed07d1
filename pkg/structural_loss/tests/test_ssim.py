import math

import numpy as np
from django.test import SimpleTestCase

from structural_loss.exceptions import GridValidationError, ShapeMismatchError
from structural_loss.grids import ProbabilityMap, one_hot_array, sigmoid_array
from structural_loss.local_stats import gaussian_window, local_covariance, local_mean, local_variance
from structural_loss.ssim import (
    SsimParams,
    contrast_structure,
    contrast_term,
    luminance_term,
    patch_statistics,
    ssim,
    ssim_index,
    ssim_loss,
    ssim_loss_arrays,
    ssim_map,
    ssim_ms_loss,
    ssim_ms_loss_arrays,
    structure_term,
)

FD_STEP = 1e-5


def central_difference(loss, z, index):
    shifted = z.copy()
    shifted[index] = z[index] + FD_STEP
    upper = loss(shifted)
    shifted[index] = z[index] - FD_STEP
    lower = loss(shifted)
    return (upper - lower) / (2.0 * FD_STEP)


class SsimIndexTests(SimpleTestCase):
    def setUp(self):
        self.rng = np.random.default_rng(7)
        self.window = gaussian_window(3, 1.5)

    def test_identical_patches_score_one(self):
        patch = self.rng.random((3, 3))
        self.assertAlmostEqual(ssim(patch, patch, self.window), 1.0, places=12)

    def test_index_is_symmetric_and_bounded(self):
        for _ in range(1000):
            x = self.rng.random((3, 3))
            y = self.rng.random((3, 3)) if self.rng.random() < 0.8 else 1.0 - x
            value = ssim(x, y, self.window)
            self.assertAlmostEqual(value, ssim(y, x, self.window), places=12)
            self.assertGreaterEqual(value, -1.0)
            self.assertLessEqual(value, 1.0)

    def test_anti_correlated_patch_with_equal_mean_scores_near_minus_one(self):
        y = (self.rng.random((3, 3)) > 0.5).astype(np.float64)
        y[0, 0], y[1, 1] = 0.0, 1.0
        mean_y = float(np.sum(self.window.weights * y))
        x = -(y - mean_y) + mean_y
        self.assertAlmostEqual(1.0 - ssim(x, y, self.window, SsimParams(c2=1e-12)), 2.0, places=9)
        self.assertLess(1.0 - ssim(x, y, self.window), 2.0)

    def test_unit_exponents_reduce_to_simplified_form(self):
        x = self.rng.random((3, 3))
        y = 0.5 * x + 0.3 * self.rng.random((3, 3))
        self.assertAlmostEqual(ssim_index(x, y, self.window), ssim(x, y, self.window), places=12)

    def test_exponents_weight_the_terms(self):
        x = self.rng.random((3, 3))
        y = self.rng.random((3, 3))
        full = ssim_index(x, y, self.window, SsimParams(alpha=2.0))
        mu_x, mu_y, *_ = patch_statistics(x, y, self.window)
        luminance = (2 * mu_x * mu_y + SsimParams().c1) / (mu_x**2 + mu_y**2 + SsimParams().c1)
        self.assertAlmostEqual(full, ssim_index(x, y, self.window) * luminance, places=12)

    def test_structure_term_without_stabilizer_is_weighted_correlation(self):
        x = self.rng.random((3, 3))
        y = self.rng.random((3, 3))
        w = self.window.weights
        mean_x = sum(w[i, j] * x[i, j] for i in range(3) for j in range(3))
        mean_y = sum(w[i, j] * y[i, j] for i in range(3) for j in range(3))
        cov = sum(w[i, j] * (x[i, j] - mean_x) * (y[i, j] - mean_y) for i in range(3) for j in range(3))
        var_x = sum(w[i, j] * (x[i, j] - mean_x) ** 2 for i in range(3) for j in range(3))
        var_y = sum(w[i, j] * (y[i, j] - mean_y) ** 2 for i in range(3) for j in range(3))
        _, _, _, _, cov_xy = patch_statistics(x, y, self.window)
        correlation = structure_term(cov_xy, math.sqrt(var_x), math.sqrt(var_y), 0.0)
        self.assertAlmostEqual(correlation, cov / math.sqrt(var_x * var_y), places=10)

    def test_contrast_structure_of_identical_stats_is_one(self):
        self.assertEqual(contrast_structure(0.2, 0.2, 0.2, 1e-4), 1.0)

    def test_patch_must_match_window(self):
        with self.assertRaises(ShapeMismatchError):
            ssim(np.zeros((5, 5)), np.zeros((5, 5)), self.window)

    def test_map_of_identical_planes_is_one(self):
        planes = self.rng.random((2, 6, 6))
        np.testing.assert_allclose(ssim_map(planes, planes, self.window), np.ones((2, 6, 6)), atol=1e-12)

    def test_invalid_constants(self):
        with self.assertRaises(GridValidationError):
            SsimParams(c1=0.0)


class SsimLossTests(SimpleTestCase):
    def setUp(self):
        rng = np.random.default_rng(11)
        self.y = (rng.random((2, 5, 6)) > 0.5).astype(np.float64)
        self.z = rng.normal(size=(2, 5, 6))
        self.window = gaussian_window(3, 1.5)

    def _check_gradient(self, loss_fn):
        report = loss_fn(self.z)
        rng = np.random.default_rng(0)
        for _ in range(12):
            index = tuple(int(rng.integers(0, extent)) for extent in self.z.shape)
            numeric = central_difference(lambda z: loss_fn(z).total_loss, self.z, index)
            self.assertAlmostEqual(report.gradient[index], numeric, delta=1e-8 + 1e-5 * abs(numeric))

    def test_ssim_loss_gradient_matches_finite_differences(self):
        self._check_gradient(lambda z: ssim_loss_arrays(self.y, sigmoid_array(z), self.window))

    def test_mean_subtracted_loss_gradient_matches_finite_differences(self):
        self._check_gradient(lambda z: ssim_ms_loss_arrays(self.y, sigmoid_array(z), self.window))

    def test_gradient_with_void_pixels(self):
        valid = np.ones((5, 6), dtype=bool)
        valid[2, 3] = False
        self._check_gradient(lambda z: ssim_loss_arrays(self.y, sigmoid_array(z), self.window, valid=valid))

    def test_loss_map_sums_to_total(self):
        report = ssim_loss_arrays(self.y, sigmoid_array(self.z), self.window)
        self.assertAlmostEqual(float(report.loss_map.sum()), report.total_loss, places=14)

    def test_perfect_prediction_has_zero_loss(self):
        self.assertAlmostEqual(ssim_loss_arrays(self.y, self.y, self.window).total_loss, 0.0, places=10)
        self.assertAlmostEqual(ssim_ms_loss_arrays(self.y, self.y, self.window).total_loss, 0.0, places=10)

    def test_void_pixels_do_not_contribute(self):
        valid = np.ones((5, 6), dtype=bool)
        valid[0, 0] = False
        report = ssim_loss_arrays(self.y, sigmoid_array(self.z), self.window, valid=valid)
        np.testing.assert_array_equal(report.loss_map[:, 0, 0], [0.0, 0.0])

    def test_shape_mismatch(self):
        with self.assertRaises(ShapeMismatchError):
            ssim_loss(ProbabilityMap(np.zeros((2, 4, 4))), ProbabilityMap(np.zeros((2, 4, 5))), self.window)

    def test_map_wrapper_matches_array_function(self):
        p = sigmoid_array(self.z)
        report = ssim_ms_loss(ProbabilityMap(self.y), ProbabilityMap(p), self.window)
        self.assertEqual(report.total_loss, ssim_ms_loss_arrays(self.y, p, self.window).total_loss)


class SsimTermTests(SimpleTestCase):
    def test_terms_of_equal_statistics_are_one(self):
        self.assertAlmostEqual(luminance_term(0.4, 0.4, 1e-4), 1.0, places=15)
        self.assertAlmostEqual(contrast_term(0.3, 0.3, 9e-4), 1.0, places=15)

    def test_terms_shrink_as_statistics_diverge(self):
        self.assertLess(luminance_term(0.9, 0.1, 1e-4), luminance_term(0.6, 0.4, 1e-4))
        self.assertAlmostEqual(contrast_term(0.2, 0.0, 0.0), 0.0, places=15)

    def test_named_luminance_values(self):
        self.assertAlmostEqual(luminance_term(0.0, 1.0, 0.01), 0.01 / 1.01, places=15)
        self.assertAlmostEqual(luminance_term(0.0, 1.0, 0.01), 0.00990, places=5)
        for c1 in (1e-4, 0.01, 1.0):
            self.assertAlmostEqual(luminance_term(0.5, 0.5, c1), 1.0, places=15)

    def test_anti_correlated_structure_is_minus_one(self):
        window = gaussian_window(3, 1.5)
        y = np.random.default_rng(3).random((3, 3))
        mean_y = float(np.sum(window.weights * y))
        x = -(y - mean_y) + 0.25
        _, _, var_x, var_y, cov_xy = patch_statistics(x, y, window)
        self.assertAlmostEqual(structure_term(cov_xy, math.sqrt(var_x), math.sqrt(var_y), 0.0), -1.0, places=12)
        self.assertAlmostEqual(structure_term(cov_xy, math.sqrt(var_x), math.sqrt(var_y), 1e-14), -1.0, places=9)


class MeanSubtractedLossTests(SimpleTestCase):
    def setUp(self):
        self.window = gaussian_window(3, 1.5)

    def test_per_location_values_stay_in_zero_two(self):
        rng = np.random.default_rng(21)
        for _ in range(200):
            y = rng.random((2, 6, 6))
            p = rng.random((2, 6, 6)) if rng.random() < 0.7 else 1.0 - y
            report = ssim_ms_loss_arrays(y, p, self.window)
            values = report.loss_map * y.size
            self.assertGreaterEqual(float(values.min()), -1e-12)
            self.assertLessEqual(float(values.max()), 2.0)

    def test_negated_deviations_approach_two(self):
        y = np.indices((6, 6)).sum(axis=0) % 2 * np.ones((2, 1, 1))
        report = ssim_ms_loss_arrays(y, 1.0 - y, self.window, c2=1e-12)
        np.testing.assert_allclose(report.loss_map * y.size, np.full(y.shape, 2.0), atol=1e-9)
        self.assertLess(ssim_ms_loss_arrays(y, 1.0 - y, self.window).total_loss, 2.0)

    def test_uses_single_c2_with_weighted_variances(self):
        rng = np.random.default_rng(8)
        y = (rng.random((1, 5, 5)) > 0.5).astype(np.float64)
        p = rng.random((1, 5, 5))
        c2 = 0.03**2
        mu_y, mu_p = local_mean(y, self.window), local_mean(p, self.window)
        var_y, var_p = local_variance(y, mu_y, self.window), local_variance(p, mu_p, self.window)
        cov = local_covariance(p, y, mu_p, mu_y, self.window)
        expected = (var_p + var_y - 2.0 * cov) / (var_p + var_y + c2)
        report = ssim_ms_loss_arrays(y, p, self.window, c2=c2)
        np.testing.assert_allclose(report.loss_map * y.size, expected, atol=1e-12)


class SsimGradientSweepTests(SimpleTestCase):
    def test_twenty_random_instances(self):
        rng = np.random.default_rng(17)
        window = gaussian_window(3, 1.5)
        for _ in range(20):
            y = one_hot_array(rng.integers(0, 3, size=(6, 6)), 3)
            z = rng.normal(scale=1.5, size=(3, 6, 6))
            for loss_fn in (ssim_loss_arrays, ssim_ms_loss_arrays):
                report = loss_fn(y, sigmoid_array(z), window)
                for _ in range(6):
                    index = tuple(int(rng.integers(0, extent)) for extent in z.shape)
                    numeric = central_difference(
                        lambda shifted: loss_fn(y, sigmoid_array(shifted), window).total_loss, z, index
                    )
                    self.assertAlmostEqual(report.gradient[index], numeric, delta=1e-8 + 1e-4 * abs(numeric))
