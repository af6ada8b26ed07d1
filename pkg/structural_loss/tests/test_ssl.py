import itertools
import math

import numpy as np
from django.test import SimpleTestCase

from structural_loss.exceptions import GridValidationError, ShapeMismatchError
from structural_loss.grids import VOID, LabelMap, LogitMap, ProbabilityMap, one_hot_array, sigmoid_array
from structural_loss.reports import loss_share
from structural_loss.ssl import (
    SslParams,
    bce_mean_arrays,
    combined_arrays,
    combined_loss,
    e_max,
    hard_mask,
    mean_bce,
    normalize_plane,
    normalized_extremes,
    normalized_value_bounds,
    sigmoid_bce,
    softmax_ce,
    softmax_ce_arrays,
    ssl_arrays,
    ssl_total,
    ssl_total_from_probabilities,
    structural_error,
    structural_error_arrays,
)

from . import oracles


def flipped_fixture(height=8, width=8, pixel=(3, 4)):
    """All-background labels and a prediction that flips one pixel to class 1."""
    truth = np.zeros((height, width), dtype=np.int64)
    predicted = truth.copy()
    predicted[pixel] = 1
    return one_hot_array(truth, 2), one_hot_array(predicted, 2)


def central_difference(loss, z, index, step=1e-5):
    shifted = z.copy()
    shifted[index] = z[index] + step
    upper = loss(shifted)
    shifted[index] = z[index] - step
    lower = loss(shifted)
    return (upper - lower) / (2.0 * step)


def random_instances(seed, count=20, shape=(3, 6, 6)):
    """Seeded (labels, logits) pairs; labels are one-hot over the channel axis."""
    rng = np.random.default_rng(seed)
    for _ in range(count):
        ids = rng.integers(0, shape[0], size=shape[1:])
        yield one_hot_array(ids, shape[0]), rng.normal(scale=2.0, size=shape)


class GradientSweepTests(SimpleTestCase):
    coords_per_instance = 8

    def assert_gradient_matches(self, gradient, loss, z, seed):
        rng = np.random.default_rng(seed)
        for _ in range(self.coords_per_instance):
            index = tuple(int(rng.integers(0, extent)) for extent in z.shape)
            numeric = central_difference(loss, z, index)
            self.assertAlmostEqual(gradient[index], numeric, delta=1e-9 + 1e-6 * abs(numeric))

    def test_softmax_ce(self):
        for seed, (y, z) in enumerate(random_instances(11)):
            report = softmax_ce_arrays(y, z)
            self.assert_gradient_matches(report.gradient, lambda shifted: softmax_ce_arrays(y, shifted).total_loss, z, seed)

    def test_bce(self):
        for seed, (y, z) in enumerate(random_instances(12)):
            report = bce_mean_arrays(y, z)
            self.assert_gradient_matches(report.gradient, lambda shifted: bce_mean_arrays(y, shifted).total_loss, z, seed)

    def test_combined_with_inner_lambda(self):
        params = SslParams(lam=0.3)
        for seed, (y, z) in enumerate(random_instances(13)):
            report = combined_arrays(y, z, params)
            ssl = ssl_arrays(y, z, params)
            mask, weights, count = ssl.hard_mask, ssl.error_map, ssl.hard_count

            def frozen(shifted):
                value = params.lam * bce_mean_arrays(y, shifted).total_loss
                if count:
                    hard = np.where(mask, weights * sigmoid_bce(shifted, y), 0.0)
                    value += (1.0 - params.lam) * float(hard.sum()) / count
                return value

            self.assert_gradient_matches(report.gradient, frozen, z, seed)


class StructuralErrorTests(SimpleTestCase):
    def test_default_e_max(self):
        self.assertAlmostEqual(e_max(), 4.671, delta=1e-3)
        self.assertAlmostEqual(e_max(), oracles.e_max(), places=12)

    def test_bounds_match_exhaustive_binary_patches(self):
        weights = oracles.window_weights(3, 1.5)
        c4 = 0.01
        values = []
        for bits in itertools.product((0.0, 1.0), repeat=9):
            patch = np.array(bits).reshape(3, 3)
            mu = float(np.sum(weights * patch))
            sigma = math.sqrt(max(float(np.sum(weights * patch * patch)) - mu * mu, 0.0))
            values.append((patch[1, 1] - mu + c4) / (sigma + c4))
        upper, lower = normalized_value_bounds(SslParams())
        self.assertAlmostEqual(max(values), upper, places=12)
        self.assertAlmostEqual(min(values), lower, places=12)
        self.assertAlmostEqual(max(values) - min(values), e_max(), places=12)

    def test_flipped_center_matches_loop_oracle_for_every_binary_patch(self):
        y = np.array(list(itertools.product((0.0, 1.0), repeat=9))).reshape(512, 3, 3)
        p = y.copy()
        p[:, 1, 1] = 1.0 - p[:, 1, 1]
        errors = structural_error_arrays(y, p, SslParams())
        # sqrt(var) is ill-conditioned on near-constant windows
        np.testing.assert_allclose(errors, oracles.structural_error(y, p), atol=1e-5)
        self.assertLessEqual(float(errors.max()), e_max() + 1e-9)

    def test_binary_maps_never_exceed_e_max(self):
        rng = np.random.default_rng(5)
        y = (rng.random((3, 9, 9)) > 0.5).astype(np.float64)
        p = (rng.random((3, 9, 9)) > 0.5).astype(np.float64)
        errors = structural_error_arrays(y, p, SslParams())
        self.assertLessEqual(float(errors.max()), e_max() + 1e-12)

    def test_error_matches_loop_oracle(self):
        rng = np.random.default_rng(9)
        y = (rng.random((2, 6, 7)) > 0.5).astype(np.float64)
        p = rng.random((2, 6, 7))
        # sqrt(var) is ill-conditioned on near-constant windows
        np.testing.assert_allclose(structural_error_arrays(y, p, SslParams()), oracles.structural_error(y, p), atol=1e-5)

    def test_single_pixel_window_has_no_structure(self):
        params = SslParams().with_window(1, 1.5)
        self.assertEqual(e_max(params), 0.0)
        y, p = flipped_fixture()
        np.testing.assert_array_equal(structural_error_arrays(y, p, params), np.zeros(y.shape))

    def test_identical_maps_have_zero_error(self):
        y, _ = flipped_fixture()
        np.testing.assert_array_equal(structural_error_arrays(y, y, SslParams()), np.zeros(y.shape))

    def test_normalized_extremes_of_binary_maps_respect_bounds(self):
        rng = np.random.default_rng(1)
        y = (rng.random((2, 7, 7)) > 0.5).astype(np.float64)
        extremes = normalized_extremes(y, y)
        upper, lower = normalized_value_bounds(SslParams())
        self.assertLessEqual(extremes["y_nor_max"], upper + 1e-12)
        self.assertGreaterEqual(extremes["y_nor_min"], lower - 1e-12)
        self.assertEqual(extremes["e_max_observed"], 0.0)

    def test_params_validation(self):
        with self.assertRaises(GridValidationError):
            SslParams(beta=1.0)
        with self.assertRaises(GridValidationError):
            SslParams(lam=1.5)
        with self.assertRaises(GridValidationError):
            SslParams(c4=0.0)


class HardMaskTests(SimpleTestCase):
    def test_flipped_pixel_mask_matches_oracle(self):
        y, p = flipped_fixture()
        params = SslParams()
        report = ssl_arrays(y, np.zeros(y.shape), params, p=p)
        expected = oracles.structural_error(y, p) > params.beta * oracles.e_max()
        np.testing.assert_array_equal(report.hard_mask, expected)
        self.assertEqual(report.hard_count, int(expected.sum()))
        self.assertTrue(report.hard_mask[1, 3, 4])

    def test_hard_count_is_non_increasing_in_beta(self):
        rng = np.random.default_rng(2)
        y = (rng.random((2, 10, 10)) > 0.6).astype(np.float64)
        z = rng.normal(scale=2.0, size=(2, 10, 10))
        counts = [ssl_arrays(y, z, SslParams(beta=beta)).hard_count for beta in (0.0, 0.06, 0.08, 0.1, 0.12, 0.5)]
        self.assertEqual(counts, sorted(counts, reverse=True))

    def test_void_pixels_are_never_hard(self):
        y, p = flipped_fixture()
        valid = np.ones((8, 8), dtype=bool)
        valid[3, 4] = False
        mask, count = hard_mask(oracles.structural_error(y, p), SslParams(), valid)
        self.assertFalse(mask[:, 3, 4].any())
        self.assertEqual(count, int(mask.sum()))

    def test_disabled_mining_keeps_every_valid_element(self):
        errors = np.zeros((2, 3, 3))
        valid = np.ones((3, 3), dtype=bool)
        valid[0, 0] = False
        mask, count = hard_mask(errors, SslParams(ohem_enabled=False), valid)
        self.assertEqual(count, 16)
        self.assertFalse(mask[:, 0, 0].any())


class SslLossTests(SimpleTestCase):
    def setUp(self):
        rng = np.random.default_rng(4)
        self.y = (rng.random((2, 6, 6)) > 0.5).astype(np.float64)
        self.z = rng.normal(scale=1.5, size=(2, 6, 6))

    def test_gradient_treats_error_and_mask_as_constants(self):
        report = ssl_arrays(self.y, self.z)
        mask, weights, count = report.hard_mask, report.error_map, report.hard_count
        self.assertGreater(count, 0)

        def frozen(z):
            return float(np.sum(np.where(mask, weights * sigmoid_bce(z, self.y), 0.0)) / count)

        rng = np.random.default_rng(0)
        for _ in range(10):
            index = tuple(int(rng.integers(0, extent)) for extent in self.z.shape)
            shifted = self.z.copy()
            shifted[index] += 1e-5
            upper = frozen(shifted)
            shifted[index] -= 2e-5
            numeric = (upper - frozen(shifted)) / 2e-5
            self.assertAlmostEqual(report.gradient[index], numeric, delta=1e-9 + 1e-6 * abs(numeric))

    def test_gradient_formula(self):
        report = ssl_arrays(self.y, self.z)
        expected = np.where(report.hard_mask, report.error_map * (sigmoid_array(self.z) - self.y), 0.0) / report.hard_count
        np.testing.assert_allclose(report.gradient, expected, atol=1e-15)

    def test_loss_map_sums_to_total(self):
        report = ssl_arrays(self.y, self.z)
        self.assertAlmostEqual(float(report.loss_map.sum()), report.total_loss, places=14)
        self.assertEqual(report.hard_proportion, report.hard_count / self.z.size)

    def test_no_hard_examples_gives_zero_loss_and_gradient(self):
        report = ssl_arrays(self.y, self.z, p=self.y)
        self.assertEqual(report.hard_count, 0)
        self.assertEqual(report.total_loss, 0.0)
        np.testing.assert_array_equal(report.gradient, np.zeros(self.z.shape))

    def test_plain_settings_reduce_to_mean_bce(self):
        params = SslParams(ohem_enabled=False, reweight_enabled=False)
        ssl = ssl_arrays(self.y, self.z, params)
        bce = bce_mean_arrays(self.y, self.z)
        self.assertEqual(ssl.total_loss, bce.total_loss)
        np.testing.assert_array_equal(ssl.gradient, bce.gradient)

    def test_combined_with_lambda_one_is_bce(self):
        combined = combined_arrays(self.y, self.z, SslParams(lam=1.0))
        bce = bce_mean_arrays(self.y, self.z)
        self.assertEqual(combined.total_loss, bce.total_loss)
        np.testing.assert_array_equal(combined.gradient, bce.gradient)

    def test_combined_mixes_components(self):
        params = SslParams(lam=0.5)
        combined = combined_arrays(self.y, self.z, params)
        expected = 0.5 * combined.components["bce"].total_loss + 0.5 * combined.components["ssl"].total_loss
        self.assertAlmostEqual(combined.total_loss, expected, places=14)
        self.assertEqual(combined.hard_count, combined.components["ssl"].hard_count)

    def test_loss_concentrates_on_the_flipped_pixel(self):
        y, p_binary = flipped_fixture()
        z = 4.0 * (2.0 * p_binary - 1.0)
        ssl = ssl_arrays(y, z)
        bce = bce_mean_arrays(y, z)
        index = (1, 3, 4)
        self.assertGreater(loss_share(ssl.loss_map, index), loss_share(bce.loss_map, index))

    def test_bce_is_stable_for_large_logits(self):
        values = sigmoid_bce(np.array([-800.0, 800.0]), np.array([1.0, 0.0]))
        np.testing.assert_allclose(values, [800.0, 800.0])

    def test_bce_named_saturation_values(self):
        confident = float(sigmoid_bce(np.array(50.0), np.array(1.0)))
        self.assertTrue(math.isfinite(confident))
        self.assertLessEqual(confident, 1e-20)
        self.assertAlmostEqual(confident / math.log1p(math.exp(-50.0)), 1.0, places=12)

        rejected = float(sigmoid_bce(np.array(-100.0), np.array(0.0)))
        self.assertFalse(math.isnan(rejected))
        self.assertGreaterEqual(rejected, 0.0)
        self.assertLessEqual(rejected, 1e-40)
        self.assertAlmostEqual(rejected / math.log1p(math.exp(-100.0)), 1.0, places=12)

    def test_softmax_ce_of_a_confident_correct_class(self):
        y = one_hot_array(np.zeros((2, 2), dtype=np.int64), 3)
        z = np.zeros((3, 2, 2))
        z[0] = 50.0
        report = softmax_ce_arrays(y, z)
        self.assertLessEqual(report.total_loss, 1e-20)
        self.assertTrue(np.all(report.loss_map >= 0.0))


class MapWrapperTests(SimpleTestCase):
    def test_shape_mismatch_names_both_shapes(self):
        labels = LabelMap(np.zeros((4, 4), dtype=np.int64), 2)
        with self.assertRaises(ShapeMismatchError) as caught:
            ssl_total(labels, LogitMap(np.zeros((2, 4, 5))))
        self.assertIn("(2, 4, 4)", str(caught.exception))
        self.assertIn("(2, 4, 5)", str(caught.exception))

    def test_void_labels_are_excluded_from_bce(self):
        ids = np.zeros((3, 3), dtype=np.int64)
        ids[1, 1] = VOID
        report = mean_bce(LabelMap(ids, 2), LogitMap(np.zeros((2, 3, 3))))
        self.assertAlmostEqual(report.total_loss, math.log(2.0), places=14)
        np.testing.assert_array_equal(report.gradient[:, 1, 1], [0.0, 0.0])

    def test_probability_input_uses_given_statistics(self):
        y, p = flipped_fixture()
        labels = LabelMap(np.argmax(y, axis=0), 2)
        report = ssl_total_from_probabilities(labels, ProbabilityMap(p))
        np.testing.assert_allclose(report.error_map, oracles.structural_error(y, p), atol=1e-5)

    def test_softmax_ce_of_uniform_logits(self):
        y = one_hot_array(np.array([[0, 1], [2, 1]]), 3)
        report = softmax_ce_arrays(y, np.zeros((3, 2, 2)))
        self.assertAlmostEqual(report.total_loss, math.log(3.0), places=14)
        np.testing.assert_allclose(report.gradient.sum(axis=0), np.zeros((2, 2)), atol=1e-15)

    def test_normalize_plane_formula(self):
        plane = np.array([[1.0, 0.0]])
        values = normalize_plane(plane, np.array([[0.5, 0.5]]), np.array([[0.5, 0.5]]), 0.01)
        np.testing.assert_allclose(values, [[0.51 / 0.51, -0.49 / 0.51]])

    def test_map_wrappers_agree_with_array_functions(self):
        ids = np.array([[0, 1, 1], [1, 0, 2], [2, 2, 0]])
        labels = LabelMap(ids, 3)
        z = np.random.default_rng(6).normal(size=(3, 3, 3))
        y = one_hot_array(ids, 3)
        self.assertEqual(combined_loss(labels, LogitMap(z)).total_loss, combined_arrays(y, z).total_loss)
        self.assertEqual(softmax_ce(labels, LogitMap(z)).total_loss, softmax_ce_arrays(y, z).total_loss)
        self.assertEqual(ssl_total(labels, LogitMap(z)).total_loss, ssl_arrays(y, z).total_loss)
        p = sigmoid_array(z)
        np.testing.assert_array_equal(
            structural_error(ProbabilityMap(y), ProbabilityMap(p)), structural_error_arrays(y, p, SslParams())
        )
