from pathlib import Path
from typing import Any, List

from django.conf import settings
from django.core.management.base import BaseCommand, CommandParser

from structural_loss.ablation import LossComparison, compare_losses, comparison_csv, comparison_summary_csv
from structural_loss.choices import LossKind
from structural_loss.cli import add_ssl_arguments, command_errors, usage_error, write_key_values, write_manifest
from structural_loss.utils import record_ablation_rows

from .sweep import parse_int_list
from .train import add_dataset_arguments, add_training_arguments, scene_config_from_options, train_config_from_options


class Command(BaseCommand):
    help: str = (
        "Train a loss and a baseline from the same seeds and compare val mIoU, "
        "overall and on the thin-structure region"
    )

    def add_arguments(self, parser: CommandParser) -> None:
        parser.add_argument("--loss", choices=LossKind.values, default=LossKind.SSL, help="Loss under test")
        parser.add_argument("--baseline", choices=LossKind.values, default=LossKind.BCE, help="Reference loss")
        parser.add_argument("--seeds", default="0,1,2", help="Comma-separated seeds (at least 3)")
        parser.add_argument("--out", default=None, help="Output directory")
        add_training_arguments(parser)
        add_dataset_arguments(parser)
        add_ssl_arguments(parser)

    def handle(self, *args: Any, **options: Any) -> None:
        if options["loss"] == options["baseline"]:
            raise usage_error(self, "compare", "--loss and --baseline must differ")

        out_dir: Path = Path(
            options["out"] or Path(settings.HARNESS_OUTPUT_DIR) / f"compare_{options['loss']}_{options['baseline']}"
        )
        with command_errors():
            seeds: List[int] = parse_int_list(options["seeds"])
            base = train_config_from_options(options, options["loss"], seeds[0] if seeds else 0)
            comparison: LossComparison = compare_losses(
                options["loss"], options["baseline"], seeds, base, scene_config_from_options(options)
            )
            record_ablation_rows(comparison.as_ablation_rows())

            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "comparison.csv").write_text(comparison_csv(comparison), encoding="utf-8")
            (out_dir / "comparison_summary.csv").write_text(comparison_summary_csv(comparison), encoding="utf-8")
            write_manifest(out_dir, {"per_seed": "comparison.csv", "summary": "comparison_summary.csv"})

            write_key_values(
                self.stdout,
                {f"{row.metric}_mean_difference": row.mean_difference for row in comparison.summary}
                | {"out": str(out_dir)},
            )
