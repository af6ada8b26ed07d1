from django.db import models


class LossKind(models.TextChoices):
    CE = "ce", "Softmax cross entropy"
    BCE = "bce", "Sigmoid cross entropy"
    SSIM = "ssim", "SSIM loss"
    SSIM_MS = "ssim_ms", "Mean-subtracted SSIM loss"
    SSL = "ssl", "Structural similarity loss"
    COMBINED = "combined", "Cross entropy + SSL"


class RunStatus(models.TextChoices):
    RUNNING = "running", "Running"
    COMPLETED = "completed", "Completed"
    FAILED = "failed", "Failed"


class AblationAxis(models.TextChoices):
    BETA = "beta", "Hard-example threshold beta"
    SIGMA = "sigma", "Gaussian window sigma"
    REGION_SIZE = "region_size", "Window size k"
    OHEM = "ohem", "Hard example mining"
    REWEIGHT = "reweight", "Error reweighting"
    LOSS_KIND = "loss_kind", "Loss function"
