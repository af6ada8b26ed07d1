"""
SSIM components, the simplified index, and the two SSIM-based losses used as
segmentation baselines.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Final, Optional, Union

import numpy as np

from .exceptions import GridValidationError, ShapeMismatchError
from .grids import CHANNEL_AXIS, ProbabilityMap
from .local_stats import GaussianWindow, local_covariance, local_mean, local_mean_adjoint, local_variance
from .reports import LossReport

ArrayOrFloat = Union[float, np.ndarray]

# standard constants for unit dynamic range: (K1 * L)^2, (K2 * L)^2 with L = 1
DEFAULT_C1: Final[float] = 0.01**2
DEFAULT_C2: Final[float] = 0.03**2


@dataclass(frozen=True)
class SsimParams:
    """
    Constants of the SSIM index. The exponents are stored for the full index
    only; the losses always use the simplified form (all exponents 1, C3 = C2/2).
    """

    c1: float = DEFAULT_C1
    c2: float = DEFAULT_C2
    alpha: float = 1.0
    theta: float = 1.0
    gamma: float = 1.0

    def __post_init__(self) -> None:
        if not (self.c1 > 0 and self.c2 > 0):
            raise GridValidationError(f"C1 and C2 must be positive, got C1={self.c1}, C2={self.c2}")
        if min(self.alpha, self.theta, self.gamma) <= 0:
            raise GridValidationError("SSIM exponents must be positive")

    @property
    def c3(self) -> float:
        return self.c2 / 2.0


def luminance_term(mu_x: ArrayOrFloat, mu_y: ArrayOrFloat, c1: float) -> ArrayOrFloat:
    return (2.0 * mu_x * mu_y + c1) / (mu_x * mu_x + mu_y * mu_y + c1)


def contrast_term(sigma_x: ArrayOrFloat, sigma_y: ArrayOrFloat, c2: float) -> ArrayOrFloat:
    return (2.0 * sigma_x * sigma_y + c2) / (sigma_x * sigma_x + sigma_y * sigma_y + c2)


def structure_term(sigma_xy: ArrayOrFloat, sigma_x: ArrayOrFloat, sigma_y: ArrayOrFloat, c3: float) -> ArrayOrFloat:
    """Pearson correlation of the two patches when `c3` is zero."""
    return (sigma_xy + c3) / (sigma_x * sigma_y + c3)


def contrast_structure(
    var_x: ArrayOrFloat, var_y: ArrayOrFloat, cov_xy: ArrayOrFloat, c2: float
) -> ArrayOrFloat:
    """Contrast and structure combined, the S2 factor of the simplified index."""
    return (2.0 * cov_xy + c2) / (var_x + var_y + c2)


def patch_statistics(x: np.ndarray, y: np.ndarray, win: GaussianWindow) -> tuple[float, float, float, float, float]:
    """Weighted (mu_x, mu_y, var_x, var_y, cov_xy) of two patches under one window placement."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ShapeMismatchError(x.shape, y.shape, "patches")
    if x.shape != win.weights.shape:
        raise ShapeMismatchError(x.shape, win.weights.shape, "patch and window")

    w: np.ndarray = win.weights
    mu_x: float = float(np.sum(w * x))
    mu_y: float = float(np.sum(w * y))
    var_x: float = max(float(np.sum(w * x * x)) - mu_x * mu_x, 0.0)
    var_y: float = max(float(np.sum(w * y * y)) - mu_y * mu_y, 0.0)
    cov_xy: float = float(np.sum(w * x * y)) - mu_x * mu_y
    return mu_x, mu_y, var_x, var_y, cov_xy


def ssim(x: np.ndarray, y: np.ndarray, win: GaussianWindow, params: SsimParams = SsimParams()) -> float:
    """Simplified SSIM index of two window-sized patches."""
    mu_x, mu_y, var_x, var_y, cov_xy = patch_statistics(x, y, win)
    return float(luminance_term(mu_x, mu_y, params.c1) * contrast_structure(var_x, var_y, cov_xy, params.c2))


def ssim_index(x: np.ndarray, y: np.ndarray, win: GaussianWindow, params: SsimParams = SsimParams()) -> float:
    """
    General index l^alpha * c^theta * s^gamma. A negative structure term with a
    non-integer gamma has no real power and yields NaN.
    """
    mu_x, mu_y, var_x, var_y, cov_xy = patch_statistics(x, y, win)
    sigma_x: float = math.sqrt(var_x)
    sigma_y: float = math.sqrt(var_y)
    luminance: float = float(luminance_term(mu_x, mu_y, params.c1))
    contrast: float = float(contrast_term(sigma_x, sigma_y, params.c2))
    structure: float = float(structure_term(cov_xy, sigma_x, sigma_y, params.c3))
    return float(
        np.power(luminance, params.alpha) * np.power(contrast, params.theta) * np.power(structure, params.gamma)
    )


def ssim_map(x: np.ndarray, y: np.ndarray, win: GaussianWindow, params: SsimParams = SsimParams()) -> np.ndarray:
    """Per-pixel simplified SSIM between two stacks of planes."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ShapeMismatchError(x.shape, y.shape)
    mu_x: np.ndarray = local_mean(x, win)
    mu_y: np.ndarray = local_mean(y, win)
    var_x: np.ndarray = local_variance(x, mu_x, win)
    var_y: np.ndarray = local_variance(y, mu_y, win)
    cov_xy: np.ndarray = local_covariance(x, y, mu_x, mu_y, win)
    return luminance_term(mu_x, mu_y, params.c1) * contrast_structure(var_x, var_y, cov_xy, params.c2)


class _PredictionStats:
    """Local statistics of a prediction against a target, with the clamp state kept for backprop."""

    def __init__(self, y: np.ndarray, p: np.ndarray, win: GaussianWindow) -> None:
        self.win: GaussianWindow = win
        self.y: np.ndarray = y
        self.p: np.ndarray = p
        self.mu_p: np.ndarray = local_mean(p, win)
        self.mu_y: np.ndarray = local_mean(y, win)
        raw_var_p: np.ndarray = local_mean(p * p, win) - self.mu_p * self.mu_p
        self.var_p: np.ndarray = np.maximum(raw_var_p, 0.0)
        self.var_p_active: np.ndarray = raw_var_p >= 0.0
        self.var_y: np.ndarray = local_variance(y, self.mu_y, win)
        self.cov: np.ndarray = local_covariance(p, y, self.mu_p, self.mu_y, win)

    def backprop(self, grad_mu: np.ndarray, grad_var: np.ndarray, grad_cov: np.ndarray) -> np.ndarray:
        """Gradient w.r.t. p given gradients on (mu_p, var_p, cov) at every pixel."""
        grad_var = grad_var * self.var_p_active
        # var_p = E[p^2] - mu_p^2 and cov = E[y p] - mu_y mu_p
        grad_mean: np.ndarray = grad_mu - 2.0 * self.mu_p * grad_var - self.mu_y * grad_cov
        return (
            local_mean_adjoint(grad_mean, self.win)
            + 2.0 * self.p * local_mean_adjoint(grad_var, self.win)
            + self.y * local_mean_adjoint(grad_cov, self.win)
        )


def _element_weights(shape: tuple[int, ...], valid: Optional[np.ndarray]) -> np.ndarray:
    if valid is None:
        mask: np.ndarray = np.ones(shape, dtype=np.float64)
    else:
        mask = np.broadcast_to(np.expand_dims(valid, CHANNEL_AXIS), shape).astype(np.float64)
    count: float = float(mask.sum())
    return mask / count if count else mask


def ssim_loss_arrays(
    y: np.ndarray,
    p: np.ndarray,
    win: GaussianWindow,
    params: SsimParams = SsimParams(),
    valid: Optional[np.ndarray] = None,
) -> LossReport:
    """1 - SSIM averaged over elements; gradient w.r.t. the logits behind the sigmoid output `p`."""
    y = np.asarray(y, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if y.shape != p.shape:
        raise ShapeMismatchError(y.shape, p.shape)

    stats = _PredictionStats(y, p, win)
    n1: np.ndarray = 2.0 * stats.mu_p * stats.mu_y + params.c1
    d1: np.ndarray = stats.mu_p**2 + stats.mu_y**2 + params.c1
    n2: np.ndarray = 2.0 * stats.cov + params.c2
    d2: np.ndarray = stats.var_p + stats.var_y + params.c2
    s1: np.ndarray = n1 / d1
    s2: np.ndarray = n2 / d2

    weights: np.ndarray = _element_weights(p.shape, valid)
    loss_map: np.ndarray = (1.0 - s1 * s2) * weights

    grad_s: np.ndarray = -weights
    grad_mu: np.ndarray = grad_s * s2 * (2.0 * stats.mu_y * d1 - 2.0 * stats.mu_p * n1) / (d1 * d1)
    grad_var: np.ndarray = grad_s * s1 * (-n2 / (d2 * d2))
    grad_cov: np.ndarray = grad_s * s1 * (2.0 / d2)
    grad_p: np.ndarray = stats.backprop(grad_mu, grad_var, grad_cov)

    return LossReport(
        total_loss=float(loss_map.sum()),
        loss_map=loss_map,
        gradient=grad_p * p * (1.0 - p),
    )


def ssim_ms_loss_arrays(
    y: np.ndarray,
    p: np.ndarray,
    win: GaussianWindow,
    c2: float = DEFAULT_C2,
    valid: Optional[np.ndarray] = None,
) -> LossReport:
    """
    Mean-subtracted SSIM loss, 1 - S2, stabilized with C2 rather than
    (N - 1) * C2 for N = k * k. With Gaussian weights the squared norms of the
    mean-subtracted patches are weighted variances, which already carry the
    1 / N scaling that the (N - 1) factor compensates for in the unweighted sum.
    """
    if c2 <= 0:
        raise GridValidationError(f"C2 must be positive, got {c2}")
    y = np.asarray(y, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if y.shape != p.shape:
        raise ShapeMismatchError(y.shape, p.shape)

    stats = _PredictionStats(y, p, win)
    numerator: np.ndarray = stats.var_p + stats.var_y - 2.0 * stats.cov
    denominator: np.ndarray = stats.var_p + stats.var_y + c2

    weights: np.ndarray = _element_weights(p.shape, valid)
    loss_map: np.ndarray = numerator / denominator * weights

    grad_var: np.ndarray = weights * (2.0 * stats.cov + c2) / (denominator * denominator)
    grad_cov: np.ndarray = weights * (-2.0 / denominator)
    grad_p: np.ndarray = stats.backprop(np.zeros_like(p), grad_var, grad_cov)

    return LossReport(
        total_loss=float(loss_map.sum()),
        loss_map=loss_map,
        gradient=grad_p * p * (1.0 - p),
    )


def ssim_loss(
    y_map: ProbabilityMap,
    p_map: ProbabilityMap,
    win: GaussianWindow,
    params: SsimParams = SsimParams(),
    valid: Optional[np.ndarray] = None,
) -> LossReport:
    if y_map.shape != p_map.shape:
        raise ShapeMismatchError(y_map.shape, p_map.shape)
    return ssim_loss_arrays(y_map.values, p_map.values, win, params, valid)


def ssim_ms_loss(
    y_map: ProbabilityMap,
    p_map: ProbabilityMap,
    win: GaussianWindow,
    c2: float = DEFAULT_C2,
    valid: Optional[np.ndarray] = None,
) -> LossReport:
    if y_map.shape != p_map.shape:
        raise ShapeMismatchError(y_map.shape, p_map.shape)
    return ssim_ms_loss_arrays(y_map.values, p_map.values, win, c2, valid)
