"""
Structural similarity loss.

Each ground-truth plane and its probability plane are standard-normalised with
Gaussian-window local statistics; the absolute difference of the normalised
values is the structural error `e`. Elements with `e` above a fraction of its
theoretical maximum are hard examples, and their sigmoid cross entropy is
reweighted by `e`. The error, the mask and every local statistic are
constants for backpropagation: gradient only flows through the cross entropy.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Final, Optional, TypedDict

import numpy as np
from scipy.special import logsumexp

from .exceptions import GridValidationError, ShapeMismatchError
from .grids import CHANNEL_AXIS, LabelMap, LogitMap, ProbabilityMap, one_hot_array, sigmoid_array
from .local_stats import DEFAULT_SIGMA, DEFAULT_WINDOW_SIZE, GaussianWindow, gaussian_window, local_mean, local_variance
from .reports import LossReport, SslReport

DEFAULT_C4: Final[float] = 0.01
DEFAULT_BETA: Final[float] = 0.1
DEFAULT_LAMBDA: Final[float] = 0.5

# probabilities read from files are clipped before conversion to logits
_PROBABILITY_EPS: Final[float] = 1e-7


@dataclass(frozen=True)
class SslParams:
    window: GaussianWindow = field(default_factory=lambda: gaussian_window(DEFAULT_WINDOW_SIZE, DEFAULT_SIGMA))
    c4: float = DEFAULT_C4
    beta: float = DEFAULT_BETA
    lam: float = DEFAULT_LAMBDA
    ohem_enabled: bool = True
    reweight_enabled: bool = True

    def __post_init__(self) -> None:
        if not 0.0 <= self.beta < 1.0:
            raise GridValidationError(f"beta must lie in [0, 1), got {self.beta}")
        if not 0.0 <= self.lam <= 1.0:
            raise GridValidationError(f"lambda must lie in [0, 1], got {self.lam}")
        if not self.c4 > 0.0:
            raise GridValidationError(f"C4 must be positive, got {self.c4}")

    def with_window(self, size: int, sigma: float) -> SslParams:
        return replace(self, window=gaussian_window(size, sigma))


class NormalizedExtremes(TypedDict):
    y_nor_max: float
    y_nor_min: float
    p_nor_max: float
    p_nor_min: float
    e_max_observed: float
    e_mean: float
    e_median: float


def normalize_plane(plane: np.ndarray, mu: np.ndarray, sigma: np.ndarray, c4: float) -> np.ndarray:
    return (plane - mu + c4) / (sigma + c4)


def _normalized(planes: np.ndarray, window: GaussianWindow, c4: float) -> np.ndarray:
    mu: np.ndarray = local_mean(planes, window)
    sigma: np.ndarray = np.sqrt(local_variance(planes, mu, window))
    return normalize_plane(planes, mu, sigma, c4)


def structural_error_arrays(y: np.ndarray, p: np.ndarray, params: SslParams) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if y.shape != p.shape:
        raise ShapeMismatchError(y.shape, p.shape)
    return np.abs(_normalized(y, params.window, params.c4) - _normalized(p, params.window, params.c4))


def structural_error(y_planes: ProbabilityMap, p: ProbabilityMap, params: SslParams = SslParams()) -> np.ndarray:
    if y_planes.shape != p.shape:
        raise ShapeMismatchError(y_planes.shape, p.shape)
    return structural_error_arrays(y_planes.values, p.values, params)


def normalized_value_bounds(params: SslParams) -> tuple[float, float]:
    """
    (max, min) of a normalised binary plane: the lone positive centre pixel and
    its complement, both with local mean set by the centre weight.
    """
    center: float = params.window.center_weight
    spread: float = math.sqrt(max(center - center * center, 0.0)) + params.c4
    return (1.0 - center + params.c4) / spread, (center - 1.0 + params.c4) / spread


def e_max(params: SslParams = SslParams()) -> float:
    upper, lower = normalized_value_bounds(params)
    return upper - lower


def hard_mask(
    e: np.ndarray, params: SslParams = SslParams(), valid: Optional[np.ndarray] = None
) -> tuple[np.ndarray, int]:
    """
    Hard-example mask f = 1{e > beta * e_max}; void pixels never count. With
    OHEM disabled every non-void element is kept.
    """
    e = np.asarray(e, dtype=np.float64)
    if params.ohem_enabled:
        mask: np.ndarray = e > params.beta * e_max(params)
    else:
        mask = np.ones(e.shape, dtype=bool)
    if valid is not None:
        mask &= np.broadcast_to(np.expand_dims(valid, CHANNEL_AXIS), e.shape)
    return mask, int(np.count_nonzero(mask))


def sigmoid_bce(z: np.ndarray, y: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    return np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))


def _valid_elements(shape: tuple[int, ...], valid: Optional[np.ndarray]) -> np.ndarray:
    if valid is None:
        return np.ones(shape, dtype=bool)
    return np.broadcast_to(np.expand_dims(valid, CHANNEL_AXIS), shape)


def bce_mean_arrays(y: np.ndarray, z: np.ndarray, valid: Optional[np.ndarray] = None) -> LossReport:
    """Plain sigmoid cross entropy averaged over non-void elements."""
    elements: np.ndarray = _valid_elements(z.shape, valid)
    count: int = int(np.count_nonzero(elements))
    if count == 0:
        return LossReport(total_loss=0.0, loss_map=np.zeros(z.shape), gradient=np.zeros(z.shape))

    p: np.ndarray = sigmoid_array(z)
    loss_map: np.ndarray = np.where(elements, sigmoid_bce(z, y), 0.0) / count
    gradient: np.ndarray = np.where(elements, p - y, 0.0) / count
    return LossReport(total_loss=float(loss_map.sum()), loss_map=loss_map, gradient=gradient)


def ssl_arrays(
    y: np.ndarray,
    z: np.ndarray,
    params: SslParams = SslParams(),
    valid: Optional[np.ndarray] = None,
    p: Optional[np.ndarray] = None,
) -> SslReport:
    """
    SSL over (..., C, H, W) arrays. `p` overrides sigmoid(z) for the local
    statistics, for callers that hold probabilities rather than logits.
    """
    y = np.asarray(y, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if y.shape != z.shape:
        raise ShapeMismatchError(y.shape, z.shape)
    if p is None:
        p = sigmoid_array(z)

    elements: np.ndarray = _valid_elements(z.shape, valid)
    element_count: int = int(np.count_nonzero(elements))
    errors: np.ndarray = structural_error_arrays(y, p, params)
    mask, hard_count = hard_mask(errors, params, valid)
    limit: float = e_max(params)
    proportion: float = hard_count / element_count if element_count else 0.0

    if hard_count == 0:
        zeros: np.ndarray = np.zeros(z.shape)
        return SslReport(
            total_loss=0.0,
            loss_map=zeros,
            error_map=errors,
            hard_mask=mask,
            hard_count=0,
            hard_proportion=proportion,
            gradient=zeros.copy(),
            e_max=limit,
        )

    weights: np.ndarray = errors if params.reweight_enabled else np.ones(z.shape)
    loss_map: np.ndarray = np.where(mask, weights * sigmoid_bce(z, y), 0.0) / hard_count
    gradient: np.ndarray = np.where(mask, weights * (sigmoid_array(z) - y), 0.0) / hard_count
    return SslReport(
        total_loss=float(loss_map.sum()),
        loss_map=loss_map,
        error_map=errors,
        hard_mask=mask,
        hard_count=hard_count,
        hard_proportion=proportion,
        gradient=gradient,
        e_max=limit,
    )


def combined_arrays(
    y: np.ndarray,
    z: np.ndarray,
    params: SslParams = SslParams(),
    valid: Optional[np.ndarray] = None,
) -> LossReport:
    bce: LossReport = bce_mean_arrays(y, z, valid)
    ssl: SslReport = ssl_arrays(y, z, params, valid)
    lam: float = params.lam
    return LossReport(
        total_loss=lam * bce.total_loss + (1.0 - lam) * ssl.total_loss,
        loss_map=lam * bce.loss_map + (1.0 - lam) * ssl.loss_map,
        gradient=lam * bce.gradient + (1.0 - lam) * ssl.gradient,
        hard_count=ssl.hard_count,
        hard_proportion=ssl.hard_proportion,
        components={"bce": bce, "ssl": ssl.as_loss_report()},
    )


def softmax_ce_arrays(y: np.ndarray, z: np.ndarray, valid: Optional[np.ndarray] = None) -> LossReport:
    """Softmax cross entropy across channels, averaged over non-void pixels."""
    z = np.asarray(z, dtype=np.float64)
    if y.shape != z.shape:
        raise ShapeMismatchError(y.shape, z.shape)
    pixels: np.ndarray = _valid_elements(z.shape, valid)
    pixel_count: int = int(np.count_nonzero(np.take(pixels, 0, axis=CHANNEL_AXIS)))
    if pixel_count == 0:
        return LossReport(total_loss=0.0, loss_map=np.zeros(z.shape), gradient=np.zeros(z.shape))

    log_probabilities: np.ndarray = z - logsumexp(z, axis=CHANNEL_AXIS, keepdims=True)
    probabilities: np.ndarray = np.exp(log_probabilities)
    loss_map: np.ndarray = np.where(pixels, -y * log_probabilities, 0.0) / pixel_count
    gradient: np.ndarray = np.where(pixels, probabilities - y, 0.0) / pixel_count
    return LossReport(total_loss=float(loss_map.sum()), loss_map=loss_map, gradient=gradient)


def _check_pair(labels: LabelMap, logits: LogitMap) -> np.ndarray:
    if logits.channels != labels.class_count or (logits.height, logits.width) != labels.shape:
        raise ShapeMismatchError(
            (labels.class_count, labels.height, labels.width), logits.shape, "labels and logits"
        )
    return one_hot_array(labels.ids, labels.class_count)


def ssl_total(labels: LabelMap, logits: LogitMap, params: SslParams = SslParams()) -> SslReport:
    y: np.ndarray = _check_pair(labels, logits)
    return ssl_arrays(y, logits.values, params, labels.valid_mask)


def ssl_total_from_probabilities(
    labels: LabelMap, probs: ProbabilityMap, params: SslParams = SslParams()
) -> SslReport:
    """
    SSL for a stored probability map: the statistics use the probabilities as
    given, the cross entropy uses their (clipped) logits.
    """
    clipped: np.ndarray = np.clip(probs.values, _PROBABILITY_EPS, 1.0 - _PROBABILITY_EPS)
    logits = LogitMap(np.log(clipped) - np.log1p(-clipped))
    y: np.ndarray = _check_pair(labels, logits)
    return ssl_arrays(y, logits.values, params, labels.valid_mask, p=probs.values)


def mean_bce(labels: LabelMap, logits: LogitMap) -> LossReport:
    y: np.ndarray = _check_pair(labels, logits)
    return bce_mean_arrays(y, logits.values, labels.valid_mask)


def combined_loss(labels: LabelMap, logits: LogitMap, params: SslParams = SslParams()) -> LossReport:
    y: np.ndarray = _check_pair(labels, logits)
    return combined_arrays(y, logits.values, params, labels.valid_mask)


def softmax_ce(labels: LabelMap, logits: LogitMap) -> LossReport:
    y: np.ndarray = _check_pair(labels, logits)
    return softmax_ce_arrays(y, logits.values, labels.valid_mask)


def normalized_extremes(
    y: np.ndarray, p: np.ndarray, params: SslParams = SslParams(), valid: Optional[np.ndarray] = None
) -> NormalizedExtremes:
    """Extremes of the normalised maps and summary statistics of e over non-void elements."""
    elements: np.ndarray = _valid_elements(np.shape(p), valid)
    y_nor: np.ndarray = _normalized(np.asarray(y, dtype=np.float64), params.window, params.c4)[elements]
    p_nor: np.ndarray = _normalized(np.asarray(p, dtype=np.float64), params.window, params.c4)[elements]
    if y_nor.size == 0:
        raise GridValidationError("no non-void elements to summarise")
    errors: np.ndarray = np.abs(y_nor - p_nor)
    return {
        "y_nor_max": float(y_nor.max()),
        "y_nor_min": float(y_nor.min()),
        "p_nor_max": float(p_nor.max()),
        "p_nor_min": float(p_nor.min()),
        "e_max_observed": float(errors.max()),
        "e_mean": float(errors.mean()),
        "e_median": float(np.median(errors)),
    }
