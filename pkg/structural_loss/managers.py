from __future__ import annotations

from django.db import models

from .choices import RunStatus


class TrainingRunQuerySet(models.QuerySet["TrainingRun"]):
    def completed(self) -> TrainingRunQuerySet:
        return self.filter(status=RunStatus.COMPLETED)

    def for_loss(self, loss_kind: str) -> TrainingRunQuerySet:
        return self.filter(loss_kind=loss_kind)


class TrainingRunManager(models.Manager["TrainingRun"]):
    def get_queryset(self) -> TrainingRunQuerySet:
        return TrainingRunQuerySet(self.model, using=self._db)

    def completed(self) -> TrainingRunQuerySet:
        return self.get_queryset().completed()

    def for_loss(self, loss_kind: str) -> TrainingRunQuerySet:
        return self.get_queryset().for_loss(loss_kind)


class AblationResultQuerySet(models.QuerySet["AblationResult"]):
    def for_axis(self, axis: str) -> AblationResultQuerySet:
        return self.filter(axis=axis)


class AblationResultManager(models.Manager["AblationResult"]):
    def get_queryset(self) -> AblationResultQuerySet:
        return AblationResultQuerySet(self.model, using=self._db)

    def for_axis(self, axis: str) -> AblationResultQuerySet:
        return self.get_queryset().for_axis(axis)
