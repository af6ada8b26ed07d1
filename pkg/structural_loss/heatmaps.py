"""
Grayscale renderings of real-valued fields (structural error, hard masks) as
8-bit PGM files with a sidecar text file recording the mapped range.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .codecs import write_pgm_array
from .exceptions import GridValidationError


@dataclass(frozen=True)
class HeatmapImage:
    pixels: np.ndarray
    minimum: float
    maximum: float

    def __post_init__(self) -> None:
        if self.minimum > self.maximum:
            raise GridValidationError(f"heatmap range is inverted: {self.minimum} > {self.maximum}")


def tile_channels(field: np.ndarray) -> np.ndarray:
    """(C, H, W) -> (H, W*C), channels side by side."""
    field = np.asarray(field)
    if field.ndim == 2:
        return field
    if field.ndim != 3:
        raise GridValidationError(f"expected a (C, H, W) or (H, W) field, got shape {field.shape}")
    return np.concatenate(list(field), axis=1)


def render_heatmap(
    field: np.ndarray, minimum: Optional[float] = None, maximum: Optional[float] = None
) -> HeatmapImage:
    """Linear map of [minimum, maximum] onto [0, 255]; a constant field renders black."""
    values: np.ndarray = tile_channels(np.asarray(field, dtype=np.float64))
    low: float = float(values.min()) if minimum is None else minimum
    high: float = float(values.max()) if maximum is None else maximum
    if high <= low:
        return HeatmapImage(pixels=np.zeros(values.shape, dtype=np.uint8), minimum=low, maximum=max(low, high))
    scaled: np.ndarray = np.clip((values - low) / (high - low), 0.0, 1.0)
    return HeatmapImage(pixels=np.rint(scaled * 255.0).astype(np.uint8), minimum=low, maximum=high)


def write_heatmap(path: Union[str, Path], image: HeatmapImage) -> None:
    path = Path(path)
    write_pgm_array(path, image.pixels)
    path.with_suffix(".txt").write_text(f"min {image.minimum!r}\nmax {image.maximum!r}\n", encoding="utf-8")
