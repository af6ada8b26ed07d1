import logging
from pathlib import Path
from typing import Any, List

from django.conf import settings
from django.core.management.base import BaseCommand, CommandParser

from structural_loss.ablation import (
    FROZEN_AXES,
    AblationTable,
    AxisValue,
    SweepRow,
    hard_proportion_sweep,
    is_non_increasing,
    parse_axis_value,
    results_csv,
    run_ablation,
    summary_csv,
    sweep_csv,
)
from structural_loss.checkpoints import load_checkpoint
from structural_loss.choices import AblationAxis, LossKind
from structural_loss.cli import add_ssl_arguments, command_errors, ssl_params_from_options, usage_error, write_manifest
from structural_loss.datasets import generate_dataset
from structural_loss.utils import record_ablation_rows

from .train import (
    add_dataset_arguments,
    add_training_arguments,
    scene_config_from_options,
    train_config_from_options,
)

logger: logging.Logger = logging.getLogger(__name__)


def parse_int_list(text: str) -> List[int]:
    return [int(item) for item in text.split(",") if item.strip()]


class Command(BaseCommand):
    help: str = (
        "Vary one parameter: on a frozen --checkpoint report the hard-example proportion per value, "
        "or with --seeds train per (value, seed) and report val mIoU mean and std"
    )

    def add_arguments(self, parser: CommandParser) -> None:
        parser.add_argument("--param", required=True, choices=AblationAxis.values, help="Parameter to vary")
        parser.add_argument("--values", required=True, help="Comma-separated values (on/off for switches)")
        parser.add_argument("--checkpoint", default=None, help="Frozen checkpoint directory")
        parser.add_argument("--seeds", default=None, help="Comma-separated training seeds (at least 3)")
        parser.add_argument("--seed", type=int, default=0, help="Dataset seed for --checkpoint")
        parser.add_argument("--loss", choices=LossKind.values, default=LossKind.SSL, help="Base loss for training sweeps")
        parser.add_argument("--out", default=None, help="Output directory")
        add_training_arguments(parser)
        add_dataset_arguments(parser)
        add_ssl_arguments(parser)

    def handle(self, *args: Any, **options: Any) -> None:
        axis: str = options["param"]
        frozen: bool = options["checkpoint"] is not None
        if frozen == (options["seeds"] is not None):
            raise usage_error(self, "sweep", "pass either --checkpoint or --seeds")
        if frozen and axis not in FROZEN_AXES:
            raise usage_error(self, "sweep", f"--checkpoint sweeps vary one of {', '.join(FROZEN_AXES)}")

        out_dir: Path = Path(options["out"] or Path(settings.HARNESS_OUTPUT_DIR) / f"sweep_{axis}")
        with command_errors():
            values: List[AxisValue] = [parse_axis_value(axis, item) for item in options["values"].split(",") if item.strip()]
            out_dir.mkdir(parents=True, exist_ok=True)
            if frozen:
                self._frozen_sweep(axis, values, options, out_dir)
            else:
                self._training_sweep(axis, values, options, out_dir)

    def _frozen_sweep(self, axis: str, values: List[AxisValue], options: Any, out_dir: Path) -> None:
        model = load_checkpoint(options["checkpoint"])
        dataset = generate_dataset(scene_config_from_options(options), options["seed"])
        rows: List[SweepRow] = hard_proportion_sweep(model, dataset.val, axis, values, ssl_params_from_options(options))
        if axis == AblationAxis.BETA:
            ordered = sorted(zip(values, rows), key=lambda pair: float(pair[0]))
            if not is_non_increasing([row.hard_proportion for _, row in ordered]):
                logger.warning("Hard-example proportion increased with beta")

        text: str = sweep_csv(rows)
        (out_dir / "sweep.csv").write_text(text, encoding="utf-8")
        write_manifest(out_dir, {"sweep": "sweep.csv"})
        self.stdout.write(text, ending="")

    def _training_sweep(self, axis: str, values: List[AxisValue], options: Any, out_dir: Path) -> None:
        seeds: List[int] = parse_int_list(options["seeds"])
        base = train_config_from_options(options, options["loss"], seeds[0] if seeds else 0)
        table: AblationTable = run_ablation(axis, values, seeds, base, scene_config_from_options(options))
        record_ablation_rows(table.rows)

        (out_dir / "ablation_results.csv").write_text(results_csv(table.rows), encoding="utf-8")
        text: str = summary_csv(table.summary)
        (out_dir / "ablation_summary.csv").write_text(text, encoding="utf-8")
        write_manifest(out_dir, {"results": "ablation_results.csv", "summary": "ablation_summary.csv"})
        self.stdout.write(text, ending="")
