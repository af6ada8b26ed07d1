import csv
import io
from pathlib import Path
from typing import Any, Dict, FrozenSet

import numpy as np
from django.conf import settings
from django.core.management.base import BaseCommand, CommandError, CommandParser

from structural_loss.checkpoints import CHECKPOINT_FILE, CHECKPOINT_MANIFEST, save_checkpoint
from structural_loss.choices import LossKind
from structural_loss.cli import (
    EXIT_FAILURE,
    SSL_FLAG_NAMES,
    SSL_OPTION_NAMES,
    add_ssl_arguments,
    command_errors,
    ssl_params_from_options,
    usage_error,
    write_key_values,
    write_manifest,
)
from structural_loss.datasets import SceneConfig, SyntheticDataset, generate_dataset, label_statistics
from structural_loss.exceptions import NonFiniteLossError
from structural_loss.metrics import ConfusionMatrix, summarize, write_metrics_csv
from structural_loss.models import TrainingRun
from structural_loss.network import TinyFcn
from structural_loss.training import TrainConfig, TrainingResult, evaluate, train, write_train_log
from structural_loss.utils import complete_training_run, fail_training_run, record_training_run

# SSL-side flags each loss actually reads
ACCEPTED_SSL_OPTIONS: Dict[str, FrozenSet[str]] = {
    LossKind.CE: frozenset(),
    LossKind.BCE: frozenset(),
    LossKind.SSIM: frozenset({"k", "sigma"}),
    LossKind.SSIM_MS: frozenset({"k", "sigma"}),
    LossKind.SSL: frozenset({"k", "sigma", "beta", "c4", "no_ohem", "no_reweight"}),
    LossKind.COMBINED: frozenset({"k", "sigma", "beta", "c4", "lam", "no_ohem", "no_reweight"}),
}


def add_dataset_arguments(parser: CommandParser) -> None:
    defaults: Dict[str, Any] = settings.HARNESS_DATASET
    parser.add_argument("--train-size", type=int, default=defaults["train_size"], help="Training scenes")
    parser.add_argument("--val-size", type=int, default=defaults["val_size"], help="Validation scenes")
    parser.add_argument("--size", type=int, default=defaults["height"], help="Scene height and width")
    parser.add_argument("--classes", type=int, default=defaults["class_count"], help="Classes including background")
    parser.add_argument("--appendage-width", type=int, choices=[1, 2], default=None, help="Fix appendage width")


def scene_config_from_options(options: Dict[str, Any]) -> SceneConfig:
    return SceneConfig(
        height=options["size"],
        width=options["size"],
        class_count=options["classes"],
        train_size=options["train_size"],
        val_size=options["val_size"],
        appendage_width=options["appendage_width"],
    )


def add_training_arguments(parser: CommandParser) -> None:
    defaults: Dict[str, Any] = settings.HARNESS_TRAINING
    parser.add_argument("--max-iter", type=int, default=defaults["max_iter"], help="Training iterations")
    parser.add_argument("--base-lr", type=float, default=defaults["base_lr"], help="Base learning rate")
    parser.add_argument("--batch-size", type=int, default=defaults["batch_size"], help="Scenes per step")
    parser.add_argument(
        "--slow-start-steps", type=int, default=defaults["slow_start_steps"], help="Steps at the slow-start rate"
    )
    parser.add_argument("--float32", action="store_true", help="Keep parameters in 32-bit floats")


def train_config_from_options(options: Dict[str, Any], loss_kind: str, seed: int) -> TrainConfig:
    return TrainConfig(
        loss_kind=loss_kind,
        ssl=ssl_params_from_options(options),
        base_lr=options["base_lr"],
        max_iter=options["max_iter"],
        slow_start_steps=options["slow_start_steps"],
        batch_size=options["batch_size"],
        seed=seed,
    )


def label_statistics_csv(statistics: Dict[int, float]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["class", "fraction"])
    for index, fraction in statistics.items():
        writer.writerow([index, repr(fraction)])
    return buffer.getvalue()


class Command(BaseCommand):
    help: str = "Train the tiny network on a synthetic split and write checkpoint, log and metrics"

    def add_arguments(self, parser: CommandParser) -> None:
        parser.add_argument("--loss", choices=LossKind.values, default=settings.HARNESS_TRAINING["loss_kind"])
        parser.add_argument("--seed", type=int, default=0, help="Seed for data, initialization and batches")
        parser.add_argument("--out", default=None, help="Output directory")
        add_training_arguments(parser)
        add_dataset_arguments(parser)
        add_ssl_arguments(parser, defaults=False)

    def handle(self, *args: Any, **options: Any) -> None:
        loss_kind: str = options["loss"]
        rejected = [
            name
            for name in SSL_OPTION_NAMES + SSL_FLAG_NAMES
            if options.get(name) not in (None, False) and name not in ACCEPTED_SSL_OPTIONS[loss_kind]
        ]
        if rejected:
            flags: str = ", ".join("--" + name.replace("_", "-") for name in rejected)
            raise usage_error(self, "train", f"{flags} not used by --loss {loss_kind}")

        seed: int = options["seed"]
        out_dir: Path = Path(options["out"] or Path(settings.HARNESS_OUTPUT_DIR) / f"train_{loss_kind}_{seed}")
        with command_errors():
            config: TrainConfig = train_config_from_options(options, loss_kind, seed)
            scene_config: SceneConfig = scene_config_from_options(options)
            out_dir.mkdir(parents=True, exist_ok=True)

            dataset: SyntheticDataset = generate_dataset(scene_config, seed)
            dtype = np.float32 if options["float32"] else np.float64
            model: TinyFcn = TinyFcn.initialize(scene_config.class_count, seed, dtype=dtype)
            run: TrainingRun = record_training_run(config, out_dir)
            try:
                result: TrainingResult = train(model, dataset, config, dump_dir=out_dir)
            except NonFiniteLossError as exc:
                fail_training_run(run, str(exc))
                raise CommandError(f"{exc}; state written to {out_dir}", returncode=EXIT_FAILURE) from exc

            save_checkpoint(result.model, out_dir)
            write_train_log(out_dir / "train_log.csv", result.log)
            cm: ConfusionMatrix = evaluate(result.model, dataset.val, loss_kind)
            write_metrics_csv(out_dir / "metrics.csv", cm)
            (out_dir / "label_stats.csv").write_text(
                label_statistics_csv(label_statistics(dataset.train, scene_config.class_count)), encoding="utf-8"
            )
            write_manifest(
                out_dir,
                {
                    "checkpoint": CHECKPOINT_FILE,
                    "checkpoint_manifest": CHECKPOINT_MANIFEST,
                    "train_log": "train_log.csv",
                    "metrics": "metrics.csv",
                    "label_stats": "label_stats.csv",
                },
            )

            summary = summarize(cm)
            complete_training_run(run, result.final_loss, summary)
            write_key_values(
                self.stdout,
                {
                    "final_loss": result.final_loss,
                    "miou": summary["miou"],
                    "pixel_accuracy": summary["pixel_accuracy"],
                    "gradient_check_max_error": result.gradient_check.max_relative_error,
                    "out": str(out_dir),
                },
            )
