from __future__ import annotations

import uuid
from typing import Any, Dict, List, Optional

from django.core.validators import MaxValueValidator, MinValueValidator
from django.db import models

from .choices import AblationAxis, LossKind, RunStatus
from .managers import AblationResultManager, TrainingRunManager


class HarnessRecord(models.Model):
    """Shared base for harness bookkeeping rows: UUID key plus creation and update stamps."""

    id = models.UUIDField(primary_key=True, default=uuid.uuid4, editable=False)
    created_at = models.DateTimeField(auto_now_add=True)
    updated_at = models.DateTimeField(auto_now=True)

    class Meta:
        abstract = True


class TrainingRun(HarnessRecord):
    loss_kind: str = models.CharField(max_length=20, choices=LossKind.choices)
    seed: int = models.BigIntegerField(default=0)
    status: str = models.CharField(max_length=20, choices=RunStatus.choices, default=RunStatus.RUNNING)
    config: Dict[str, Any] = models.JSONField(default=dict, blank=True)
    final_loss: Optional[float] = models.FloatField(null=True, blank=True)
    val_miou: Optional[float] = models.FloatField(
        null=True, blank=True, validators=[MinValueValidator(0.0), MaxValueValidator(1.0)]
    )
    val_pixel_accuracy: Optional[float] = models.FloatField(
        null=True, blank=True, validators=[MinValueValidator(0.0), MaxValueValidator(1.0)]
    )
    output_dir: str = models.CharField(max_length=500, blank=True)
    error_message: str = models.TextField(blank=True)

    objects: TrainingRunManager = TrainingRunManager()

    def __str__(self) -> str:
        return f"{self.get_loss_kind_display()} (seed {self.seed}) - {self.status}"

    class Meta:
        ordering: List[str] = ["-created_at"]


class AblationResult(HarnessRecord):
    axis: str = models.CharField(max_length=20, choices=AblationAxis.choices)
    value: str = models.CharField(max_length=50)
    seed: int = models.BigIntegerField()
    val_miou: float = models.FloatField(validators=[MinValueValidator(0.0), MaxValueValidator(1.0)])
    mean_hard_proportion: Optional[float] = models.FloatField(null=True, blank=True)
    run: Optional[TrainingRun] = models.ForeignKey(
        TrainingRun, on_delete=models.SET_NULL, null=True, blank=True, related_name="ablation_results"
    )

    objects: AblationResultManager = AblationResultManager()

    def __str__(self) -> str:
        return f"{self.axis}={self.value} seed {self.seed}: mIoU {self.val_miou:.4f}"

    class Meta:
        ordering: List[str] = ["axis", "value", "seed"]
