import json
import math
import tempfile
from pathlib import Path
from unittest import mock

import numpy as np
from django.test import SimpleTestCase

from structural_loss.choices import LossKind
from structural_loss.datasets import SceneConfig, generate_dataset, thin_region
from structural_loss.exceptions import GridValidationError, NonFiniteLossError
from structural_loss.network import TinyFcn
from structural_loss.reports import LossReport
from structural_loss.ssl import SslParams
from structural_loss.training import (
    TRAIN_LOG_HEADER,
    MomentumSGD,
    TrainConfig,
    TrainLogRow,
    evaluate,
    poly_lr,
    restrict_to_thin_region,
    train,
    train_log_csv,
)

TINY_SCENES = SceneConfig(height=16, width=16, train_size=4, val_size=1)


def tiny_config(**overrides):
    values = dict(base_lr=0.05, max_iter=5, slow_start_steps=2, batch_size=2, seed=0, gradient_check_coords=3)
    values.update(overrides)
    return TrainConfig(**values)


class PolyLrTests(SimpleTestCase):
    def test_midpoint_value(self):
        self.assertAlmostEqual(poly_lr(1000, 2000, 1.0), 0.5 ** 0.9, places=12)
        self.assertAlmostEqual(poly_lr(1000, 2000, 1.0), 0.5359, places=4)

    def test_reaches_zero_at_the_end(self):
        self.assertEqual(poly_lr(2000, 2000, 0.007), 0.0)
        self.assertEqual(poly_lr(0, 2000, 0.007), 0.007)

    def test_slow_start_uses_a_seventh_of_base(self):
        self.assertAlmostEqual(poly_lr(0, 2000, 0.007, slow_start_steps=100), 0.001, places=15)
        self.assertAlmostEqual(poly_lr(99, 2000, 0.007, slow_start_steps=100), 0.001, places=15)
        self.assertAlmostEqual(poly_lr(100, 2000, 0.007, slow_start_steps=100), 0.007 * 0.95**0.9, places=15)
        self.assertEqual(poly_lr(5, 2000, 0.007, slow_start_steps=100, slow_start_lr=0.002), 0.002)

    def test_out_of_range_iteration(self):
        with self.assertRaises(ValueError):
            poly_lr(2001, 2000, 0.007)
        with self.assertRaises(ValueError):
            poly_lr(-1, 2000, 0.007)


class TrainConfigTests(SimpleTestCase):
    def test_max_iter_must_exceed_slow_start(self):
        with self.assertRaises(GridValidationError):
            TrainConfig(max_iter=100, slow_start_steps=100)

    def test_unknown_loss_kind(self):
        with self.assertRaises(GridValidationError):
            TrainConfig(loss_kind="focal")

    def test_default_slow_start_lr(self):
        self.assertAlmostEqual(TrainConfig().effective_slow_start_lr, 0.001, places=15)
        self.assertEqual(TrainConfig().as_dict()["beta"], 0.1)


class MomentumSgdTests(SimpleTestCase):
    def test_converges_on_a_quadratic(self):
        theta = {"theta": np.array([5.0])}
        optimizer = MomentumSGD(theta, momentum=0.9)
        for _ in range(500):
            # f = a/2 (theta - c)^2 with a=2, c=3
            optimizer.step({"theta": 2.0 * (theta["theta"] - 3.0)}, lr=0.1)
        self.assertLess(abs(float(theta["theta"][0]) - 3.0), 1e-6)

    def test_zero_learning_rate_leaves_parameters_unchanged(self):
        model = TinyFcn.initialize(3, seed=0)
        before = {name: value.copy() for name, value in model.parameters.items()}
        optimizer = MomentumSGD(model.parameters)
        optimizer.step({name: np.ones_like(value) for name, value in before.items()}, lr=0.0)
        for name, value in model.parameters.items():
            np.testing.assert_array_equal(value, before[name])


class TrainLoopTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.dataset = generate_dataset(TINY_SCENES, seed=0)

    def test_log_has_one_row_per_iteration(self):
        result = train(TinyFcn.initialize(3, seed=0), self.dataset, tiny_config())
        self.assertEqual([row.iter for row in result.log], list(range(5)))
        self.assertAlmostEqual(result.log[0].lr, 0.05 / 7, places=15)
        self.assertTrue(all(row.hard_count is not None for row in result.log))
        self.assertEqual(result.final_loss, result.log[-1].loss)

    def test_training_is_deterministic(self):
        first = train(TinyFcn.initialize(3, seed=1), self.dataset, tiny_config(seed=1))
        second = train(TinyFcn.initialize(3, seed=1), self.dataset, tiny_config(seed=1))
        self.assertEqual([row.loss for row in first.log], [row.loss for row in second.log])
        for name, value in first.model.parameters.items():
            np.testing.assert_array_equal(value, second.model.parameters[name])

    def test_combined_with_lambda_one_trains_like_bce(self):
        bce = train(TinyFcn.initialize(3, seed=2), self.dataset, tiny_config(loss_kind=LossKind.BCE))
        combined = train(
            TinyFcn.initialize(3, seed=2),
            self.dataset,
            tiny_config(loss_kind=LossKind.COMBINED, ssl=SslParams(lam=1.0)),
        )
        self.assertEqual([row.loss for row in bce.log], [row.loss for row in combined.log])
        for name, value in bce.model.parameters.items():
            np.testing.assert_array_equal(value, combined.model.parameters[name])

    def test_every_loss_kind_runs(self):
        for kind in LossKind.values:
            with self.subTest(kind=kind):
                result = train(TinyFcn.initialize(3, seed=0), self.dataset, tiny_config(loss_kind=kind))
                self.assertTrue(all(math.isfinite(row.loss) for row in result.log))

    def test_non_finite_loss_dumps_state_and_raises(self):
        shape = (2, 3, 16, 16)
        nan_report = LossReport(total_loss=math.nan, loss_map=np.zeros(shape), gradient=np.zeros(shape))
        with tempfile.TemporaryDirectory() as tmp:
            with mock.patch("structural_loss.training.evaluate_objective", return_value=nan_report):
                with self.assertRaises(NonFiniteLossError) as caught:
                    train(TinyFcn.initialize(3, seed=0), self.dataset, tiny_config(), dump_dir=tmp)
            dumped = json.loads((Path(tmp) / "nonfinite_state.json").read_text())
        self.assertEqual(dumped["iter"], 0)
        self.assertEqual(caught.exception.state["iter"], 0)
        self.assertEqual(len(dumped["batch_indices"]), 2)

    def test_evaluate_counts_every_val_pixel(self):
        cm = evaluate(TinyFcn.initialize(3, seed=0), self.dataset.val, LossKind.SSL)
        self.assertEqual(cm.total, 16 * 16)
        self.assertEqual(cm.class_count, 3)

    def test_thin_only_evaluation_scores_the_thin_region(self):
        model = TinyFcn.initialize(3, seed=0)
        cm = evaluate(model, self.dataset.val, LossKind.SSL, thin_only=True)
        region = thin_region(self.dataset.val[0].labels.ids)
        self.assertEqual(cm.total, int(region.sum()))
        self.assertLess(cm.total, 16 * 16)
        restricted = restrict_to_thin_region(self.dataset.val[0].labels)
        np.testing.assert_array_equal(restricted.valid_mask, region)


class TrainLogCsvTests(SimpleTestCase):
    def test_header_and_empty_cells(self):
        rows = [TrainLogRow(iter=0, lr=0.001, loss=0.5, hard_count=None, hard_proportion=None)]
        lines = train_log_csv(rows).splitlines()
        self.assertEqual(lines[0], ",".join(TRAIN_LOG_HEADER))
        self.assertEqual(lines[1], "0,0.001,0.5,,")

    def test_hard_example_count_column_is_named_m(self):
        self.assertEqual(TRAIN_LOG_HEADER, ["iter", "lr", "loss", "M", "hard_proportion"])
