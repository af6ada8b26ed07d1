from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
from django.core.management.base import BaseCommand, CommandParser

from structural_loss.cli import add_window_arguments, command_errors, load_planes, write_key_values
from structural_loss.codecs import write_segt
from structural_loss.exceptions import ShapeMismatchError
from structural_loss.local_stats import gaussian_window
from structural_loss.ssim import DEFAULT_C1, DEFAULT_C2, SsimParams, ssim_map


class Command(BaseCommand):
    help: str = "Mean simplified SSIM per channel between a reference and a prediction (PGM labels or SEGT tensors)"

    def add_arguments(self, parser: CommandParser) -> None:
        parser.add_argument("ref", help="Reference map (label PGM or SEGT)")
        parser.add_argument("pred", help="Predicted map (label PGM or SEGT)")
        add_window_arguments(parser)
        parser.add_argument("--c1", type=float, default=DEFAULT_C1, help="Luminance stabilizer")
        parser.add_argument("--c2", type=float, default=DEFAULT_C2, help="Contrast-structure stabilizer")
        parser.add_argument("--classes", type=int, default=None, help="Class count for label PGM inputs")
        parser.add_argument("--map", default=None, help="Write the per-pixel SSIM map here as SEGT")

    def handle(self, *args: Any, **options: Any) -> None:
        with command_errors():
            classes: Optional[int] = options["classes"]
            reference, _ = load_planes(options["ref"], classes)
            prediction, _ = load_planes(options["pred"], classes or reference.shape[0])
            if reference.shape != prediction.shape:
                raise ShapeMismatchError(reference.shape, prediction.shape, f"{options['ref']} and {options['pred']}")

            window = gaussian_window(options["k"], options["sigma"])
            field: np.ndarray = ssim_map(reference, prediction, window, SsimParams(c1=options["c1"], c2=options["c2"]))
            summary: Dict[str, float] = {
                f"ssim_channel_{channel}": float(plane.mean()) for channel, plane in enumerate(field)
            }
            summary["ssim_mean"] = float(field.mean())
            write_key_values(self.stdout, summary)

            if options["map"]:
                write_segt(Path(options["map"]), field)
