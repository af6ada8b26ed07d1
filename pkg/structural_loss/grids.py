from __future__ import annotations

from dataclasses import dataclass
from typing import Final

import numpy as np
from scipy.special import logsumexp

from .exceptions import GridValidationError

VOID: Final[int] = 255

# Every map stores channels as the outermost axis: values[channel, row, col].
CHANNEL_AXIS: Final[int] = -3

# sigmoid outputs saturate here instead of at exactly 0 or 1
_SIGMOID_FLOOR: Final[float] = float(np.nextafter(0.0, 1.0))
_SIGMOID_CEILING: Final[float] = float(np.nextafter(1.0, 0.0))


def _readonly(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True)
    array.setflags(write=False)
    return array


def _check_planes(values: np.ndarray, kind: str) -> None:
    if values.ndim != 3:
        raise GridValidationError(f"{kind} expects a (channels, height, width) array, got shape {values.shape}")
    if min(values.shape) < 1:
        raise GridValidationError(f"{kind} dimensions must be positive, got shape {values.shape}")
    if not np.all(np.isfinite(values)):
        raise GridValidationError(f"{kind} values must be finite")


@dataclass(frozen=True)
class LabelMap:
    ids: np.ndarray
    class_count: int

    def __post_init__(self) -> None:
        ids: np.ndarray = np.asarray(self.ids)
        if ids.ndim != 2 or min(ids.shape) < 1:
            raise GridValidationError(f"LabelMap expects a non-empty (height, width) array, got shape {ids.shape}")
        if not np.issubdtype(ids.dtype, np.integer):
            raise GridValidationError(f"LabelMap ids must be integers, got dtype {ids.dtype}")
        if not 1 <= self.class_count < VOID:
            raise GridValidationError(f"class_count must be in [1, {VOID - 1}], got {self.class_count}")

        labelled: np.ndarray = ids[ids != VOID]
        if labelled.size and (labelled.min() < 0 or labelled.max() >= self.class_count):
            raise GridValidationError(
                f"LabelMap ids must lie in [0, {self.class_count - 1}] or equal {VOID}, "
                f"found range [{labelled.min()}, {labelled.max()}]"
            )
        object.__setattr__(self, "ids", _readonly(ids.astype(np.int64)))

    @property
    def height(self) -> int:
        return int(self.ids.shape[0])

    @property
    def width(self) -> int:
        return int(self.ids.shape[1])

    @property
    def shape(self) -> tuple[int, int]:
        return self.height, self.width

    @property
    def valid_mask(self) -> np.ndarray:
        return self.ids != VOID


@dataclass(frozen=True)
class ProbabilityMap:
    values: np.ndarray

    def __post_init__(self) -> None:
        values: np.ndarray = np.asarray(self.values, dtype=np.float64)
        _check_planes(values, "ProbabilityMap")
        if values.min() < 0.0 or values.max() > 1.0:
            raise GridValidationError(
                f"ProbabilityMap values must lie in [0, 1], found range [{values.min()}, {values.max()}]"
            )
        object.__setattr__(self, "values", _readonly(values))

    @property
    def channels(self) -> int:
        return int(self.values.shape[0])

    @property
    def height(self) -> int:
        return int(self.values.shape[1])

    @property
    def width(self) -> int:
        return int(self.values.shape[2])

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.channels, self.height, self.width


@dataclass(frozen=True)
class LogitMap:
    values: np.ndarray

    def __post_init__(self) -> None:
        values: np.ndarray = np.asarray(self.values, dtype=np.float64)
        _check_planes(values, "LogitMap")
        object.__setattr__(self, "values", _readonly(values))

    @property
    def channels(self) -> int:
        return int(self.values.shape[0])

    @property
    def height(self) -> int:
        return int(self.values.shape[1])

    @property
    def width(self) -> int:
        return int(self.values.shape[2])

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.channels, self.height, self.width


def planes_from_flat(flat: np.ndarray, height: int, width: int, channels: int) -> np.ndarray:
    """
    Reshape a flat channel-outermost buffer, rejecting any length that does not
    match the declared dimensions.
    """
    flat = np.asarray(flat).ravel()
    expected: int = height * width * channels
    if min(height, width, channels) < 1 or flat.size != expected:
        raise GridValidationError(
            f"Expected {expected} values for {height}x{width}x{channels}, got {flat.size}"
        )
    return flat.reshape(channels, height, width)


def one_hot_array(ids: np.ndarray, class_count: int) -> np.ndarray:
    """(..., H, W) ids -> (..., C, H, W) binary planes; void pixels are zero in every plane."""
    classes: np.ndarray = np.arange(class_count).reshape((class_count, 1, 1))
    return (np.expand_dims(ids, CHANNEL_AXIS) == classes).astype(np.float64)


def one_hot(labels: LabelMap) -> ProbabilityMap:
    return ProbabilityMap(one_hot_array(labels.ids, labels.class_count))


def sigmoid_array(z: np.ndarray) -> np.ndarray:
    """Logistic function, clamped to the float64 values strictly inside (0, 1)."""
    z = np.asarray(z, dtype=np.float64)
    decay: np.ndarray = np.exp(-np.abs(z))
    values: np.ndarray = np.where(z >= 0, 1.0 / (1.0 + decay), decay / (1.0 + decay))
    return np.clip(values, _SIGMOID_FLOOR, _SIGMOID_CEILING)


def sigmoid(logits: LogitMap) -> ProbabilityMap:
    return ProbabilityMap(sigmoid_array(logits.values))


def softmax_array(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    return np.exp(z - logsumexp(z, axis=CHANNEL_AXIS, keepdims=True))


def softmax(logits: LogitMap) -> ProbabilityMap:
    """Per-pixel distribution across channels, used by the softmax baseline."""
    return ProbabilityMap(softmax_array(logits.values))


def argmax_labels(probs: ProbabilityMap) -> LabelMap:
    # np.argmax returns the first maximal index, so ties go to the lowest class.
    return LabelMap(np.argmax(probs.values, axis=0), probs.channels)
