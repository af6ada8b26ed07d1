from pathlib import Path
from typing import Any

from django.core.management.base import BaseCommand, CommandParser

from structural_loss.checkpoints import load_checkpoint
from structural_loss.choices import LossKind
from structural_loss.cli import command_errors, usage_error
from structural_loss.codecs import read_labels
from structural_loss.datasets import SceneConfig, generate_dataset
from structural_loss.grids import LabelMap
from structural_loss.metrics import ConfusionMatrix, accumulate, metrics_csv
from structural_loss.network import TinyFcn
from structural_loss.training import evaluate

from .train import add_dataset_arguments, scene_config_from_options


class Command(BaseCommand):
    help: str = "Confusion-matrix metrics (per-class IoU, mIoU, pixel accuracy) as CSV"

    def add_arguments(self, parser: CommandParser) -> None:
        parser.add_argument("--truth", default=None, help="Ground-truth label PGM")
        parser.add_argument("--pred", default=None, help="Predicted label PGM")
        parser.add_argument("--checkpoint", default=None, help="Checkpoint directory to evaluate on the synthetic val split")
        parser.add_argument("--loss", choices=LossKind.values, default=LossKind.SSL, help="Loss the checkpoint was trained with")
        parser.add_argument("--seed", type=int, default=0, help="Dataset seed for --checkpoint")
        parser.add_argument("--out", default=None, help="Also write the CSV to this file")
        add_dataset_arguments(parser)

    def _label_pair(self, truth_path: str, pred_path: str) -> ConfusionMatrix:
        truth: LabelMap = read_labels(truth_path)
        pred: LabelMap = read_labels(pred_path)
        # both maps share the larger inferred class count
        count: int = max(truth.class_count, pred.class_count)
        truth, pred = LabelMap(truth.ids, count), LabelMap(pred.ids, count)
        return accumulate(ConfusionMatrix.empty(truth.class_count), truth, pred)

    def handle(self, *args: Any, **options: Any) -> None:
        label_mode: bool = options["truth"] is not None or options["pred"] is not None
        if label_mode == (options["checkpoint"] is not None):
            raise usage_error(self, "eval", "pass either --truth and --pred, or --checkpoint")
        if label_mode and (options["truth"] is None or options["pred"] is None):
            raise usage_error(self, "eval", "--truth and --pred go together")

        with command_errors():
            if label_mode:
                cm: ConfusionMatrix = self._label_pair(options["truth"], options["pred"])
            else:
                model: TinyFcn = load_checkpoint(options["checkpoint"])
                scene_config: SceneConfig = scene_config_from_options(options)
                dataset = generate_dataset(scene_config, options["seed"])
                cm = evaluate(model, dataset.val, options["loss"])

            text: str = metrics_csv(cm)
            self.stdout.write(text, ending="")
            if options["out"]:
                Path(options["out"]).write_text(text, encoding="utf-8")
