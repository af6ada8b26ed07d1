"""
Gaussian-window local statistics.

All functions operate on the last two axes, so a single (H, W) plane, a
(C, H, W) map and an (N, C, H, W) batch go through the same code. Borders are
handled with symmetric reflection (``d c b a | a b c d | d c b a``), which is
scipy's ``reflect`` mode, so every output pixel sees a full window.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Final

import numpy as np
from scipy import ndimage

from .exceptions import GridValidationError

DEFAULT_WINDOW_SIZE: Final[int] = 3
DEFAULT_SIGMA: Final[float] = 1.5

_BORDER_MODE: Final[str] = "reflect"


@dataclass(frozen=True)
class GaussianWindow:
    size: int
    sigma: float
    profile: np.ndarray
    weights: np.ndarray

    @property
    def radius(self) -> int:
        return (self.size - 1) // 2

    @property
    def center_weight(self) -> float:
        return float(self.weights[self.radius, self.radius])


def gaussian_window(size: int = DEFAULT_WINDOW_SIZE, sigma: float = DEFAULT_SIGMA) -> GaussianWindow:
    if isinstance(size, bool) or not isinstance(size, (int, np.integer)) or size < 1 or size % 2 == 0:
        raise GridValidationError(f"window size must be a positive odd integer, got {size!r}")
    if not math.isfinite(sigma) or sigma <= 0:
        raise GridValidationError(f"window sigma must be positive, got {sigma!r}")

    offsets: np.ndarray = np.arange(size, dtype=np.float64) - (size - 1) / 2
    profile: np.ndarray = np.exp(-(offsets**2) / (2.0 * sigma**2))
    profile /= profile.sum()
    # exp(-(dx^2 + dy^2) / 2s^2) factorises, so the normalised 2-D window is
    # the outer product of the normalised 1-D profile.
    weights: np.ndarray = np.outer(profile, profile)

    profile.setflags(write=False)
    weights.setflags(write=False)
    return GaussianWindow(size=int(size), sigma=float(sigma), profile=profile, weights=weights)


@dataclass(frozen=True)
class LocalStatsField:
    mean: np.ndarray
    variance: np.ndarray
    window: GaussianWindow

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.variance)


def _as_planes(plane: np.ndarray) -> np.ndarray:
    plane = np.asarray(plane, dtype=np.float64)
    if plane.ndim < 2:
        raise GridValidationError(f"local statistics need at least 2-D input, got shape {plane.shape}")
    return plane


def local_mean(plane: np.ndarray, win: GaussianWindow) -> np.ndarray:
    """Weighted mean under the window centred at every pixel (separable: rows, then columns)."""
    plane = _as_planes(plane)
    if win.size == 1:
        return plane.copy()
    rows: np.ndarray = ndimage.correlate1d(plane, win.profile, axis=-1, mode=_BORDER_MODE)
    return ndimage.correlate1d(rows, win.profile, axis=-2, mode=_BORDER_MODE)


def local_mean_direct(plane: np.ndarray, win: GaussianWindow) -> np.ndarray:
    """Direct 2-D evaluation of `local_mean`; kept as the reference path."""
    plane = _as_planes(plane)
    kernel: np.ndarray = win.weights.reshape((1,) * (plane.ndim - 2) + win.weights.shape)
    return ndimage.correlate(plane, kernel, mode=_BORDER_MODE)


def raw_local_variance(plane: np.ndarray, mu: np.ndarray, win: GaussianWindow) -> np.ndarray:
    plane = _as_planes(plane)
    return local_mean(plane * plane, win) - mu * mu


def local_variance(plane: np.ndarray, mu: np.ndarray, win: GaussianWindow) -> np.ndarray:
    return np.maximum(raw_local_variance(plane, mu, win), 0.0)


def local_covariance(
    x: np.ndarray, y: np.ndarray, mu_x: np.ndarray, mu_y: np.ndarray, win: GaussianWindow
) -> np.ndarray:
    return local_mean(_as_planes(x) * _as_planes(y), win) - mu_x * mu_y


def local_stats(plane: np.ndarray, win: GaussianWindow) -> LocalStatsField:
    mu: np.ndarray = local_mean(plane, win)
    return LocalStatsField(mean=mu, variance=local_variance(plane, mu, win), window=win)


def reflect_index(length: int, radius: int) -> np.ndarray:
    """Source index of every position in a reflect-padded axis of `length` + 2*`radius`."""
    positions: np.ndarray = np.arange(-radius, length + radius) % (2 * length)
    return np.where(positions < length, positions, 2 * length - 1 - positions)


def _fold_axis(padded: np.ndarray, length: int, radius: int, axis: int) -> np.ndarray:
    moved: np.ndarray = np.moveaxis(padded, axis, 0)
    folded: np.ndarray = np.zeros((length,) + moved.shape[1:], dtype=padded.dtype)
    np.add.at(folded, reflect_index(length, radius), moved)
    return np.moveaxis(folded, 0, axis)


def _adjoint_axis(grad: np.ndarray, win: GaussianWindow, axis: int) -> np.ndarray:
    length: int = grad.shape[axis]
    pad: list[tuple[int, int]] = [(0, 0)] * grad.ndim
    pad[axis] = (win.radius, win.radius)
    # the profile is symmetric, so correlation equals convolution here
    spread: np.ndarray = ndimage.correlate1d(
        np.pad(grad, pad), win.profile, axis=axis, mode="constant", cval=0.0
    )
    return _fold_axis(spread, length, win.radius, axis)


def local_mean_adjoint(grad: np.ndarray, win: GaussianWindow) -> np.ndarray:
    """
    Transpose of `local_mean`: maps a gradient on the mean field back onto the
    input plane, reflect padding included.
    """
    grad = _as_planes(grad)
    if win.size == 1:
        return grad.copy()
    return _adjoint_axis(_adjoint_axis(grad, win, axis=-2), win, axis=-1)
