"""
Synthetic thin-structure segmentation scenes.

Each scene holds one or more foreground blobs with 1-2 pixel wide appendages
and an occluding rectangle painted over a blob in the image only, so the
label keeps the foreground underneath. Both failure modes (thin parts and
occluded interiors) are where a pixel-wise loss and a region-wise loss differ.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, Final, List, Optional

import numpy as np
from scipy import ndimage

from .exceptions import GridValidationError
from .grids import VOID, LabelMap

logger: logging.Logger = logging.getLogger(__name__)

_MAX_ATTEMPTS: Final[int] = 64
_SEED_MASK: Final[int] = (1 << 64) - 1
# pixels around a thin structure that still count towards its score
THIN_REGION_MARGIN: Final[int] = 1

# base colours per foreground class; class 0 is background
_CLASS_COLOURS: Final[np.ndarray] = np.array(
    [
        [0.85, 0.30, 0.20],
        [0.20, 0.35, 0.85],
        [0.25, 0.80, 0.30],
        [0.80, 0.75, 0.20],
    ]
)


@dataclass(frozen=True)
class SceneConfig:
    height: int = 64
    width: int = 64
    class_count: int = 3
    train_size: int = 200
    val_size: int = 50
    # None draws each appendage 1 or 2 pixels wide at random
    appendage_width: Optional[int] = None
    max_components: int = 2
    noise: float = 0.05

    def __post_init__(self) -> None:
        if self.height < 16 or self.width < 16:
            raise GridValidationError(f"scenes must be at least 16x16, got {self.height}x{self.width}")
        if not 2 <= self.class_count <= len(_CLASS_COLOURS) + 1:
            raise GridValidationError(f"class_count must be in [2, {len(_CLASS_COLOURS) + 1}]")
        if self.appendage_width not in (None, 1, 2):
            raise GridValidationError(f"appendage_width must be 1, 2 or None, got {self.appendage_width}")
        if self.train_size < 1 or self.val_size < 1:
            raise GridValidationError("train and val splits need at least one scene each")
        if self.max_components < 1:
            raise GridValidationError("max_components must be at least 1")


@dataclass(frozen=True)
class SyntheticScene:
    image: np.ndarray
    labels: LabelMap
    seed: int

    @property
    def planes(self) -> np.ndarray:
        """Image in channel-outermost (3, H, W) layout."""
        return np.ascontiguousarray(self.image.transpose(2, 0, 1))


@dataclass(frozen=True)
class SyntheticDataset:
    config: SceneConfig
    seed: int
    train: List[SyntheticScene]
    val: List[SyntheticScene]

    @property
    def scenes(self) -> List[SyntheticScene]:
        return self.train + self.val


def scene_seed(seed: int, index: int) -> int:
    return (seed * 1_000_003 + index) & _SEED_MASK


def thin_structure_mask(ids: np.ndarray) -> np.ndarray:
    """Foreground pixels with at least two background 4-neighbours inside the image."""
    foreground: np.ndarray = (ids > 0) & (ids != VOID)
    background: np.ndarray = ids == 0
    neighbours: np.ndarray = np.zeros(ids.shape, dtype=np.int64)
    neighbours[1:, :] += background[:-1, :]
    neighbours[:-1, :] += background[1:, :]
    neighbours[:, 1:] += background[:, :-1]
    neighbours[:, :-1] += background[:, 1:]
    return foreground & (neighbours >= 2)


def has_thin_structure(ids: np.ndarray) -> bool:
    return bool(np.any(thin_structure_mask(ids)))


def thin_region(ids: np.ndarray, margin: int = THIN_REGION_MARGIN) -> np.ndarray:
    """Thin-structure pixels grown by `margin` pixels in the 8-neighbourhood."""
    mask: np.ndarray = thin_structure_mask(ids)
    if margin > 0 and mask.any():
        mask = ndimage.binary_dilation(mask, structure=np.ones((3, 3), dtype=bool), iterations=margin)
    return mask


def _rasterize_segment(
    mask: np.ndarray, start: tuple[float, float], angle: float, length: float, width: int
) -> None:
    height, img_width = mask.shape
    steps: np.ndarray = np.arange(0.0, length, 0.25)
    rows: np.ndarray = np.rint(start[0] + steps * np.sin(angle)).astype(np.int64)
    cols: np.ndarray = np.rint(start[1] + steps * np.cos(angle)).astype(np.int64)
    inside: np.ndarray = (rows >= 0) & (rows < height) & (cols >= 0) & (cols < img_width)
    rows, cols = rows[inside], cols[inside]
    mask[rows, cols] = True
    if width == 2:
        # thicken across the dominant direction
        if abs(np.cos(angle)) >= abs(np.sin(angle)):
            rows = np.minimum(rows + 1, height - 1)
        else:
            cols = np.minimum(cols + 1, img_width - 1)
        mask[rows, cols] = True


def _draw_component(
    rng: np.random.Generator, config: SceneConfig, grid_rows: np.ndarray, grid_cols: np.ndarray
) -> tuple[np.ndarray, tuple[float, float, float, float]]:
    height, width = config.height, config.width
    center_row: float = rng.uniform(0.3 * height, 0.7 * height)
    center_col: float = rng.uniform(0.3 * width, 0.7 * width)
    radius_row: float = rng.uniform(0.08 * height, 0.18 * height)
    radius_col: float = rng.uniform(0.08 * width, 0.18 * width)
    body: np.ndarray = ((grid_rows - center_row) / radius_row) ** 2 + ((grid_cols - center_col) / radius_col) ** 2 <= 1.0

    appendages: np.ndarray = np.zeros(body.shape, dtype=bool)
    for _ in range(int(rng.integers(1, 4))):
        angle: float = rng.uniform(0.0, 2.0 * np.pi)
        length: float = max(radius_row, radius_col) + rng.uniform(0.15, 0.3) * min(height, width)
        leg_width: int = config.appendage_width or int(rng.integers(1, 3))
        _rasterize_segment(appendages, (center_row, center_col), angle, length, leg_width)
    return body | appendages, (center_row, center_col, radius_row, radius_col)


def render_scene(config: SceneConfig, seed: int) -> SyntheticScene:
    rng: np.random.Generator = np.random.default_rng(seed)
    height, width = config.height, config.width
    grid_rows, grid_cols = np.mgrid[0:height, 0:width].astype(np.float64)

    for attempt in range(_MAX_ATTEMPTS):
        ids: np.ndarray = np.zeros((height, width), dtype=np.int64)
        components: List[tuple[int, np.ndarray, tuple[float, float, float, float]]] = []
        for _ in range(int(rng.integers(1, config.max_components + 1))):
            class_id: int = int(rng.integers(1, config.class_count))
            footprint, geometry = _draw_component(rng, config, grid_rows, grid_cols)
            ids[footprint] = class_id
            components.append((class_id, footprint, geometry))
        if has_thin_structure(ids):
            break
        logger.debug(f"Scene seed {seed}: attempt {attempt} had no visible thin structure, redrawing")
    else:
        raise RuntimeError(f"Could not draw a scene with a thin structure for seed {seed}")

    background_colour: np.ndarray = rng.uniform(0.2, 0.5, size=3)
    image: np.ndarray = np.broadcast_to(background_colour, (height, width, 3)).copy()
    for class_id, _, _ in components:
        colour: np.ndarray = _CLASS_COLOURS[class_id - 1] + rng.uniform(-0.08, 0.08, size=3)
        image[ids == class_id] = colour

    # occluder over the first blob, painted in the image only
    _, _, (center_row, center_col, radius_row, radius_col) = components[0]
    half_height: float = rng.uniform(0.4, 0.8) * radius_row
    half_width: float = rng.uniform(0.4, 0.8) * radius_col
    occluder: np.ndarray = (np.abs(grid_rows - center_row) <= half_height) & (np.abs(grid_cols - center_col) <= half_width)
    image[occluder] = rng.uniform(0.55, 0.7) + rng.uniform(-0.03, 0.03, size=3)

    image += config.noise * rng.standard_normal(image.shape)
    return SyntheticScene(image=np.clip(image, 0.0, 1.0), labels=LabelMap(ids, config.class_count), seed=seed)


def label_statistics(scenes: List[SyntheticScene], class_count: int) -> Dict[int, float]:
    """Pixel fraction of each class over the scenes."""
    counts: np.ndarray = np.zeros(class_count, dtype=np.int64)
    for scene in scenes:
        ids: np.ndarray = scene.labels.ids
        counts += np.bincount(ids[scene.labels.valid_mask], minlength=class_count)
    total: int = int(counts.sum())
    return {index: (float(count) / total if total else 0.0) for index, count in enumerate(counts)}


def generate_dataset(config: SceneConfig = SceneConfig(), seed: int = 0) -> SyntheticDataset:
    scenes: List[SyntheticScene] = [
        render_scene(config, scene_seed(seed, index)) for index in range(config.train_size + config.val_size)
    ]
    dataset = SyntheticDataset(
        config=config, seed=seed, train=scenes[: config.train_size], val=scenes[config.train_size :]
    )
    statistics: Dict[int, float] = label_statistics(dataset.train, config.class_count)
    logger.info(
        f"Generated {len(dataset.train)} train / {len(dataset.val)} val scenes "
        f"({config.height}x{config.width}, seed {seed}); train class fractions: "
        + ", ".join(f"{index}={fraction:.3f}" for index, fraction in statistics.items())
    )
    return dataset
