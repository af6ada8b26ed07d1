"""
Training loop for the tiny network: poly learning rate with a slow start,
momentum SGD, a finite-difference check of the model gradients at
initialization, and a per-step CSV log.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Final, List, Optional, Sequence, Union

import numpy as np

from .choices import LossKind
from .datasets import SyntheticDataset, SyntheticScene, thin_region
from .exceptions import GridValidationError, NonFiniteLossError
from .grids import VOID, LabelMap, LogitMap, argmax_labels, one_hot_array, sigmoid, softmax
from .metrics import ConfusionMatrix, accumulate
from .network import Parameters, TinyFcn
from .objectives import evaluate_objective
from .reports import LossReport
from .ssim import SsimParams
from .ssl import SslParams

logger: logging.Logger = logging.getLogger(__name__)

DEFAULT_BASE_LR: Final[float] = 0.007
DEFAULT_POWER: Final[float] = 0.9
DEFAULT_MOMENTUM: Final[float] = 0.9
DEFAULT_SLOW_START_STEPS: Final[int] = 100
# M is the hard-example count of the step
TRAIN_LOG_HEADER: Final[List[str]] = ["iter", "lr", "loss", "M", "hard_proportion"]

# relative error tolerated by the gradient check per parameter dtype
GRADIENT_TOLERANCE: Final[Dict[str, float]] = {"float64": 1e-5, "float32": 1e-3}
_FD_STEP: Final[Dict[str, float]] = {"float64": 1e-5, "float32": 1e-2}


@dataclass(frozen=True)
class TrainConfig:
    loss_kind: str = LossKind.SSL
    ssl: SslParams = field(default_factory=SslParams)
    ssim: SsimParams = field(default_factory=SsimParams)
    base_lr: float = DEFAULT_BASE_LR
    max_iter: int = 2000
    momentum: float = DEFAULT_MOMENTUM
    power: float = DEFAULT_POWER
    slow_start_steps: int = DEFAULT_SLOW_START_STEPS
    # None means base_lr / 7
    slow_start_lr: Optional[float] = None
    batch_size: int = 4
    seed: int = 0
    gradient_check_coords: int = 10

    def __post_init__(self) -> None:
        if self.loss_kind not in LossKind.values:
            raise GridValidationError(f"Unknown loss kind {self.loss_kind!r}; expected one of {list(LossKind.values)}")
        if self.max_iter <= self.slow_start_steps:
            raise GridValidationError(
                f"max_iter ({self.max_iter}) must exceed slow_start_steps ({self.slow_start_steps})"
            )
        if self.slow_start_steps < 0:
            raise GridValidationError("slow_start_steps must be non-negative")
        if self.base_lr < 0.0 or (self.slow_start_lr is not None and self.slow_start_lr < 0.0):
            raise GridValidationError("learning rates must be non-negative")
        if not 0.0 <= self.momentum < 1.0:
            raise GridValidationError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.batch_size < 1:
            raise GridValidationError("batch_size must be at least 1")

    @property
    def effective_slow_start_lr(self) -> float:
        return self.base_lr / 7.0 if self.slow_start_lr is None else self.slow_start_lr

    def as_dict(self) -> Dict[str, Any]:
        """JSON-friendly view, used for run records and manifests."""
        return {
            "loss_kind": str(self.loss_kind),
            "base_lr": self.base_lr,
            "max_iter": self.max_iter,
            "momentum": self.momentum,
            "power": self.power,
            "slow_start_steps": self.slow_start_steps,
            "slow_start_lr": self.effective_slow_start_lr,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "window_size": self.ssl.window.size,
            "sigma": self.ssl.window.sigma,
            "c4": self.ssl.c4,
            "beta": self.ssl.beta,
            "lambda": self.ssl.lam,
            "ohem": self.ssl.ohem_enabled,
            "reweight": self.ssl.reweight_enabled,
            "c1": self.ssim.c1,
            "c2": self.ssim.c2,
        }


def poly_lr(
    iteration: int,
    max_iter: int,
    base: float,
    power: float = DEFAULT_POWER,
    slow_start_steps: int = 0,
    slow_start_lr: Optional[float] = None,
) -> float:
    if not 0 <= iteration <= max_iter:
        raise ValueError(f"iteration {iteration} outside [0, {max_iter}]")
    if iteration < slow_start_steps:
        return base / 7.0 if slow_start_lr is None else slow_start_lr
    return base * (1.0 - iteration / max_iter) ** power


class MomentumSGD:
    """v <- m * v + g; theta <- theta - lr * v. Updates parameters in place."""

    def __init__(self, parameters: Parameters, momentum: float = DEFAULT_MOMENTUM) -> None:
        self.parameters: Parameters = parameters
        self.momentum: float = momentum
        self.velocity: Parameters = {name: np.zeros_like(value) for name, value in parameters.items()}

    def step(self, grads: Parameters, lr: float) -> None:
        for name, value in self.parameters.items():
            velocity: np.ndarray = self.velocity[name]
            velocity *= self.momentum
            velocity += grads[name]
            value -= lr * velocity


@dataclass(frozen=True)
class GradientCheckResult:
    max_relative_error: float
    tolerance: float
    coordinates: List[tuple[str, tuple[int, ...]]]

    @property
    def passed(self) -> bool:
        return self.max_relative_error <= self.tolerance


def check_model_gradients(
    model: TinyFcn, images: np.ndarray, coords: int = 10, seed: int = 0
) -> GradientCheckResult:
    """
    Compare backprop against central differences on random parameter
    coordinates. The check objective is <G, logits> for a fixed random G, so
    the check isolates the network from any stop-gradient in the loss.
    """
    rng: np.random.Generator = np.random.default_rng(seed)
    dtype_name: str = np.dtype(model.dtype).name
    step: float = _FD_STEP.get(dtype_name, 1e-5)
    tolerance: float = GRADIENT_TOLERANCE.get(dtype_name, 1e-5)

    logits, cache = model.forward(images)
    direction: np.ndarray = rng.standard_normal(logits.shape).astype(model.dtype)
    grads: Parameters = model.backward(cache, direction)

    names: List[str] = sorted(model.parameters)
    sizes: np.ndarray = np.array([model.parameters[name].size for name in names])
    picks: np.ndarray = rng.choice(int(sizes.sum()), size=coords, replace=False)
    offsets: np.ndarray = np.concatenate([[0], np.cumsum(sizes)])

    worst: float = 0.0
    checked: List[tuple[str, tuple[int, ...]]] = []
    for pick in picks:
        slot: int = int(np.searchsorted(offsets, pick, side="right") - 1)
        name: str = names[slot]
        param: np.ndarray = model.parameters[name]
        index: tuple[int, ...] = tuple(int(i) for i in np.unravel_index(int(pick - offsets[slot]), param.shape))
        original = param[index]
        param[index] = original + step
        upper: float = float(np.sum(direction * model.predict(images), dtype=np.float64))
        param[index] = original - step
        lower: float = float(np.sum(direction * model.predict(images), dtype=np.float64))
        param[index] = original

        numeric: float = (upper - lower) / (2.0 * step)
        analytic: float = float(grads[name][index])
        error: float = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-6)
        worst = max(worst, error)
        checked.append((name, index))
    return GradientCheckResult(max_relative_error=worst, tolerance=tolerance, coordinates=checked)


@dataclass(frozen=True)
class TrainLogRow:
    iter: int
    lr: float
    loss: float
    hard_count: Optional[int]
    hard_proportion: Optional[float]


@dataclass
class TrainingResult:
    model: TinyFcn
    log: List[TrainLogRow]
    gradient_check: GradientCheckResult

    @property
    def final_loss(self) -> float:
        return self.log[-1].loss if self.log else math.nan


@dataclass(frozen=True)
class _Split:
    images: np.ndarray
    targets: np.ndarray
    valid: np.ndarray


def _stack(scenes: Sequence[SyntheticScene], class_count: int, dtype: np.dtype) -> _Split:
    return _Split(
        images=np.stack([scene.planes for scene in scenes]).astype(dtype),
        targets=np.stack([one_hot_array(scene.labels.ids, class_count) for scene in scenes]),
        valid=np.stack([scene.labels.valid_mask for scene in scenes]),
    )


def _dump_state(
    dump_dir: Optional[Path], iteration: int, lr: float, report: LossReport, model: TinyFcn, batch: np.ndarray
) -> Dict[str, Any]:
    state: Dict[str, Any] = {
        "iter": iteration,
        "lr": lr,
        "loss": repr(report.total_loss),
        "hard_count": report.hard_count,
        "batch_indices": [int(i) for i in batch],
        "parameter_norms": {name: float(np.linalg.norm(value)) for name, value in model.parameters.items()},
        "non_finite_logit_gradients": int(np.count_nonzero(~np.isfinite(report.gradient))),
    }
    if dump_dir is not None:
        dump_dir.mkdir(parents=True, exist_ok=True)
        (dump_dir / "nonfinite_state.json").write_text(json.dumps(state, indent=2), encoding="utf-8")
    return state


def train(
    model: TinyFcn,
    dataset: SyntheticDataset,
    config: TrainConfig,
    dump_dir: Optional[Union[str, Path]] = None,
) -> TrainingResult:
    split: _Split = _stack(dataset.train, model.class_count, model.dtype)
    batch_rng: np.random.Generator = np.random.default_rng([config.seed, 1])

    gradient_check: GradientCheckResult = check_model_gradients(
        model, split.images[: config.batch_size], config.gradient_check_coords, seed=config.seed
    )
    if gradient_check.passed:
        logger.info(f"Gradient check passed: max relative error {gradient_check.max_relative_error:.3e}")
    else:
        logger.warning(
            f"Gradient check above tolerance: max relative error {gradient_check.max_relative_error:.3e} "
            f"> {gradient_check.tolerance:.0e}"
        )

    optimizer = MomentumSGD(model.parameters, config.momentum)
    log: List[TrainLogRow] = []
    scene_count: int = split.images.shape[0]
    for iteration in range(config.max_iter):
        lr: float = poly_lr(
            iteration,
            config.max_iter,
            config.base_lr,
            config.power,
            config.slow_start_steps,
            config.effective_slow_start_lr,
        )
        batch: np.ndarray = batch_rng.choice(
            scene_count, size=config.batch_size, replace=config.batch_size > scene_count
        )
        logits, cache = model.forward(split.images[batch])
        report: LossReport = evaluate_objective(
            config.loss_kind, split.targets[batch], logits, split.valid[batch], config.ssl, config.ssim
        )
        if not math.isfinite(report.total_loss):
            state: Dict[str, Any] = _dump_state(
                Path(dump_dir) if dump_dir is not None else None, iteration, lr, report, model, batch
            )
            logger.error(f"Non-finite loss at iteration {iteration}; aborting")
            raise NonFiniteLossError(f"non-finite loss {report.total_loss} at iteration {iteration}", state)

        optimizer.step(model.backward(cache, report.gradient), lr)
        log.append(
            TrainLogRow(
                iter=iteration,
                lr=lr,
                loss=report.total_loss,
                hard_count=report.hard_count,
                hard_proportion=report.hard_proportion,
            )
        )
        if iteration % 100 == 0:
            logger.info(f"iter {iteration}/{config.max_iter} lr {lr:.5f} loss {report.total_loss:.6f}")

    return TrainingResult(model=model, log=log, gradient_check=gradient_check)


def predicted_labels(logits: np.ndarray, loss_kind: str) -> List[Any]:
    """Per-image label maps from (N, C, H, W) logits; CE models read softmax, the rest sigmoid."""
    activation = softmax if loss_kind == LossKind.CE else sigmoid
    return [argmax_labels(activation(LogitMap(plane))) for plane in logits]


def restrict_to_thin_region(labels: LabelMap) -> LabelMap:
    """Labels with every pixel outside the thin-structure region marked void."""
    return LabelMap(np.where(thin_region(labels.ids), labels.ids, VOID), labels.class_count)


def evaluate(
    model: TinyFcn,
    scenes: Sequence[SyntheticScene],
    loss_kind: str = LossKind.SSL,
    batch_size: int = 8,
    thin_only: bool = False,
) -> ConfusionMatrix:
    cm: ConfusionMatrix = ConfusionMatrix.empty(model.class_count)
    for start in range(0, len(scenes), batch_size):
        chunk: Sequence[SyntheticScene] = scenes[start : start + batch_size]
        logits: np.ndarray = model.predict(np.stack([scene.planes for scene in chunk]))
        for scene, prediction in zip(chunk, predicted_labels(logits, loss_kind)):
            truth: LabelMap = restrict_to_thin_region(scene.labels) if thin_only else scene.labels
            cm = accumulate(cm, truth, prediction)
    return cm


def _cell(value: Optional[Union[int, float]]) -> str:
    if value is None:
        return ""
    return repr(value) if isinstance(value, float) else str(value)


def train_log_csv(rows: Sequence[TrainLogRow]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(TRAIN_LOG_HEADER)
    for row in rows:
        writer.writerow([row.iter, _cell(row.lr), _cell(row.loss), _cell(row.hard_count), _cell(row.hard_proportion)])
    return buffer.getvalue()


def write_train_log(path: Union[str, Path], rows: Sequence[TrainLogRow]) -> None:
    Path(path).write_text(train_log_csv(rows), encoding="utf-8")
