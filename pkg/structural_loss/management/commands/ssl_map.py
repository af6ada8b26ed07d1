import csv
import io
from pathlib import Path
from typing import Any, Dict

import numpy as np
from django.conf import settings
from django.core.management.base import BaseCommand, CommandParser

from structural_loss.cli import add_ssl_arguments, command_errors, ssl_params_from_options, write_key_values, write_manifest
from structural_loss.codecs import read_labels, read_segt, sniff_format
from structural_loss.exceptions import GridFormatError
from structural_loss.grids import LogitMap, ProbabilityMap, one_hot_array, sigmoid_array
from structural_loss.heatmaps import render_heatmap, write_heatmap
from structural_loss.reports import SslReport
from structural_loss.ssl import SslParams, normalized_extremes, ssl_total, ssl_total_from_probabilities

SUMMARY_FILE: str = "ssl_summary.csv"


class Command(BaseCommand):
    help: str = "Structural error map, hard-example mask and SSL summary for a label PGM and a prediction SEGT"

    def add_arguments(self, parser: CommandParser) -> None:
        parser.add_argument("labels", help="Ground-truth label PGM")
        parser.add_argument("probs", help="Predicted probabilities (or logits with --logits) as SEGT")
        parser.add_argument("--logits", action="store_true", help="Treat the SEGT input as logits")
        parser.add_argument("--out", default=None, help="Output directory")
        add_ssl_arguments(parser)

    def handle(self, *args: Any, **options: Any) -> None:
        out_dir: Path = Path(options["out"] or Path(settings.HARNESS_OUTPUT_DIR) / "ssl_map")
        with command_errors():
            params: SslParams = ssl_params_from_options(options)
            if sniff_format(options["labels"]) != "pgm":
                raise GridFormatError(f"{options['labels']}: labels must be a PGM file")
            if sniff_format(options["probs"]) != "segt":
                raise GridFormatError(f"{options['probs']}: predictions must be a SEGT file")

            values: np.ndarray = read_segt(options["probs"])
            labels = read_labels(options["labels"], class_count=values.shape[0])
            report: SslReport
            if options["logits"]:
                report = ssl_total(labels, LogitMap(values), params)
                probabilities: np.ndarray = sigmoid_array(values)
            else:
                report = ssl_total_from_probabilities(labels, ProbabilityMap(values), params)
                probabilities = values

            summary: Dict[str, Any] = {
                "total": report.total_loss,
                "M": report.hard_count,
                "hard_proportion": report.hard_proportion,
                "e_max": report.e_max,
            }
            summary.update(
                normalized_extremes(one_hot_array(labels.ids, labels.class_count), probabilities, params, labels.valid_mask)
            )

            out_dir.mkdir(parents=True, exist_ok=True)
            write_heatmap(out_dir / "error_map.pgm", render_heatmap(report.error_map, 0.0))
            write_heatmap(out_dir / "hard_mask.pgm", render_heatmap(report.hard_mask.astype(np.float64), 0.0, 1.0))
            buffer = io.StringIO()
            writer = csv.writer(buffer, lineterminator="\n")
            writer.writerow(list(summary))
            writer.writerow([repr(value) if isinstance(value, float) else value for value in summary.values()])
            (out_dir / SUMMARY_FILE).write_text(buffer.getvalue(), encoding="utf-8")
            write_manifest(
                out_dir,
                {"error_map": "error_map.pgm", "hard_mask": "hard_mask.pgm", "summary": SUMMARY_FILE},
            )

            write_key_values(self.stdout, summary)
