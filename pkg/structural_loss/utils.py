from pathlib import Path
from typing import Dict, List, Optional, Sequence, TypedDict, Union

import numpy as np

from .ablation import AblationRow
from .choices import RunStatus
from .metrics import MetricsSummary
from .models import AblationResult, TrainingRun
from .training import TrainConfig


class AblationValueSummary(TypedDict):
    value: str
    runs: int
    miou_mean: float
    miou_std: float
    hard_proportion_mean: Optional[float]


def record_training_run(config: TrainConfig, output_dir: Union[str, Path] = "") -> TrainingRun:
    """
    Helper function to open a run record before training starts
    """
    return TrainingRun.objects.create(
        loss_kind=config.loss_kind,
        seed=config.seed,
        status=RunStatus.RUNNING,
        config=config.as_dict(),
        output_dir=str(output_dir),
    )


def complete_training_run(run: TrainingRun, final_loss: float, summary: MetricsSummary) -> TrainingRun:
    run.status = RunStatus.COMPLETED
    run.final_loss = final_loss
    run.val_miou = summary["miou"]
    run.val_pixel_accuracy = summary["pixel_accuracy"]
    run.save(update_fields=["status", "final_loss", "val_miou", "val_pixel_accuracy", "updated_at"])
    return run


def fail_training_run(run: TrainingRun, message: str) -> TrainingRun:
    run.status = RunStatus.FAILED
    run.error_message = message
    run.save(update_fields=["status", "error_message", "updated_at"])
    return run


def record_ablation_rows(rows: Sequence[AblationRow], run: Optional[TrainingRun] = None) -> List[AblationResult]:
    return AblationResult.objects.bulk_create(
        [
            AblationResult(
                axis=row.axis,
                value=row.value,
                seed=row.seed,
                val_miou=row.miou,
                mean_hard_proportion=row.mean_hard_proportion,
                run=run,
            )
            for row in rows
        ]
    )


def get_ablation_summary(axis: str) -> List[AblationValueSummary]:
    """
    Get mean and sample std of val mIoU per recorded value of one axis
    """
    grouped: Dict[str, List[AblationResult]] = {}
    for result in AblationResult.objects.for_axis(axis).order_by("created_at", "seed"):
        grouped.setdefault(result.value, []).append(result)

    summary: List[AblationValueSummary] = []
    for value, results in grouped.items():
        scores: np.ndarray = np.array([result.val_miou for result in results])
        proportions: List[float] = [
            result.mean_hard_proportion for result in results if result.mean_hard_proportion is not None
        ]
        summary.append(
            {
                "value": value,
                "runs": len(results),
                "miou_mean": float(scores.mean()),
                "miou_std": float(scores.std(ddof=1)) if len(results) > 1 else 0.0,
                "hard_proportion_mean": float(np.mean(proportions)) if proportions else None,
            }
        )
    return summary
