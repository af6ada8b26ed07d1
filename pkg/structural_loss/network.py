"""
A minimal fully-convolutional network with hand-derived gradients.

Four 3x3 convolutions (3 -> 16 -> 16 -> 16 -> C) with ReLU in between,
reflect padding and no downsampling, so logits keep the input resolution.
Arrays are (N, channels, H, W).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Final, List, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .exceptions import GridValidationError, ShapeMismatchError
from .local_stats import reflect_index

KERNEL: Final[int] = 3
_PAD: Final[int] = KERNEL // 2
INPUT_CHANNELS: Final[int] = 3
HIDDEN_WIDTHS: Final[Tuple[int, ...]] = (16, 16, 16)

Parameters = Dict[str, np.ndarray]


def _pad(x: np.ndarray) -> np.ndarray:
    return np.pad(x, ((0, 0), (0, 0), (_PAD, _PAD), (_PAD, _PAD)), mode="symmetric")


def _unpad(grad_padded: np.ndarray, height: int, width: int) -> np.ndarray:
    """Transpose of `_pad`: fold gradient from the reflected border back onto its source pixels."""
    rows: np.ndarray = np.zeros(grad_padded.shape[:2] + (height, grad_padded.shape[3]), dtype=grad_padded.dtype)
    np.add.at(rows, (slice(None), slice(None), reflect_index(height, _PAD)), grad_padded)
    folded: np.ndarray = np.zeros(grad_padded.shape[:2] + (height, width), dtype=grad_padded.dtype)
    np.add.at(folded, (slice(None), slice(None), slice(None), reflect_index(width, _PAD)), rows)
    return folded


def conv3x3_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Returns (output, patches); patches are kept for the backward pass."""
    patches: np.ndarray = sliding_window_view(_pad(x), (KERNEL, KERNEL), axis=(2, 3))
    out: np.ndarray = np.einsum("nchwij,ocij->nohw", patches, weight, optimize=True)
    return out + bias.reshape(1, -1, 1, 1), patches


def conv3x3_backward(
    grad_out: np.ndarray, patches: np.ndarray, weight: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns gradients for (input, weight, bias)."""
    grad_weight: np.ndarray = np.einsum("nchwij,nohw->ocij", patches, grad_out, optimize=True)
    grad_bias: np.ndarray = grad_out.sum(axis=(0, 2, 3))

    batch, _, height, width = grad_out.shape
    grad_padded: np.ndarray = np.zeros(
        (batch, weight.shape[1], height + 2 * _PAD, width + 2 * _PAD), dtype=grad_out.dtype
    )
    for i in range(KERNEL):
        for j in range(KERNEL):
            grad_padded[:, :, i : i + height, j : j + width] += np.einsum(
                "nohw,oc->nchw", grad_out, weight[:, :, i, j], optimize=True
            )
    return _unpad(grad_padded, height, width), grad_weight, grad_bias


@dataclass
class ForwardCache:
    patches: List[np.ndarray]
    pre_activations: List[np.ndarray]


class TinyFcn:
    def __init__(self, parameters: Parameters) -> None:
        self.parameters: Parameters = parameters
        self.layer_count: int = len(parameters) // 2
        if self.layer_count < 1 or set(parameters) != set(self.parameter_names(self.layer_count)):
            raise GridValidationError(f"unexpected parameter names {sorted(parameters)}")

    @staticmethod
    def parameter_names(layer_count: int) -> List[str]:
        names: List[str] = []
        for layer in range(1, layer_count + 1):
            names += [f"conv{layer}.weight", f"conv{layer}.bias"]
        return names

    @classmethod
    def initialize(
        cls,
        class_count: int,
        seed: int,
        hidden_widths: Sequence[int] = HIDDEN_WIDTHS,
        dtype: np.dtype = np.float64,
    ) -> TinyFcn:
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases, in layer order."""
        rng: np.random.Generator = np.random.default_rng(seed)
        widths: List[int] = [INPUT_CHANNELS, *hidden_widths, class_count]
        parameters: Parameters = {}
        for layer, (fan_in_channels, fan_out) in enumerate(zip(widths[:-1], widths[1:]), start=1):
            bound: float = 1.0 / math.sqrt(fan_in_channels * KERNEL * KERNEL)
            parameters[f"conv{layer}.weight"] = rng.uniform(
                -bound, bound, size=(fan_out, fan_in_channels, KERNEL, KERNEL)
            ).astype(dtype)
            parameters[f"conv{layer}.bias"] = rng.uniform(-bound, bound, size=fan_out).astype(dtype)
        return cls(parameters)

    @property
    def class_count(self) -> int:
        return int(self.parameters[f"conv{self.layer_count}.bias"].shape[0])

    @property
    def dtype(self) -> np.dtype:
        return self.parameters["conv1.weight"].dtype

    def forward(self, images: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
        if images.ndim != 4 or images.shape[1] != INPUT_CHANNELS:
            raise ShapeMismatchError(images.shape, ("N", INPUT_CHANNELS, "H", "W"), "images and network input")
        cache = ForwardCache(patches=[], pre_activations=[])
        activation: np.ndarray = images.astype(self.dtype, copy=False)
        for layer in range(1, self.layer_count + 1):
            out, patches = conv3x3_forward(
                activation, self.parameters[f"conv{layer}.weight"], self.parameters[f"conv{layer}.bias"]
            )
            cache.patches.append(patches)
            cache.pre_activations.append(out)
            activation = np.maximum(out, 0.0) if layer < self.layer_count else out
        return activation, cache

    def predict(self, images: np.ndarray) -> np.ndarray:
        return self.forward(images)[0]

    def backward(self, cache: ForwardCache, grad_logits: np.ndarray) -> Parameters:
        grads: Parameters = {}
        grad: np.ndarray = grad_logits.astype(self.dtype, copy=False)
        for layer in range(self.layer_count, 0, -1):
            if layer < self.layer_count:
                grad = grad * (cache.pre_activations[layer - 1] > 0)
            weight: np.ndarray = self.parameters[f"conv{layer}.weight"]
            grad, grads[f"conv{layer}.weight"], grads[f"conv{layer}.bias"] = conv3x3_backward(
                grad, cache.patches[layer - 1], weight
            )
        return grads
