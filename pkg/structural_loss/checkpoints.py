"""
Model checkpoints: one SEGT blob per parameter, concatenated into a single
file, with a text manifest of ``name shape byte_offset`` lines. Weights
(out, in, 3, 3) are stored as (out*in, 3, 3) tensors and biases (out,) as
(out, 1, 1), so every blob is a valid channel-outermost SEGT tensor.
"""
from __future__ import annotations

import logging
from pathlib import Path
from typing import Dict, Final, List, Tuple, Union

import numpy as np

from .codecs import decode_segt, encode_segt
from .exceptions import GridFormatError
from .network import TinyFcn

logger: logging.Logger = logging.getLogger(__name__)

CHECKPOINT_FILE: Final[str] = "model.segt"
CHECKPOINT_MANIFEST: Final[str] = "model.manifest"

PathLike = Union[str, Path]


def _as_planes(value: np.ndarray) -> np.ndarray:
    if value.ndim == 1:
        return value.reshape(-1, 1, 1)
    return value.reshape(-1, *value.shape[-2:])


def _format_shape(shape: Tuple[int, ...]) -> str:
    return "x".join(str(dim) for dim in shape)


def _parse_shape(text: str) -> Tuple[int, ...]:
    try:
        return tuple(int(dim) for dim in text.split("x"))
    except ValueError as exc:
        raise GridFormatError(f"bad shape {text!r} in checkpoint manifest") from exc


def save_checkpoint(model: TinyFcn, directory: PathLike) -> Path:
    """Write the checkpoint and its manifest into `directory`; returns the checkpoint path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    blobs: List[bytes] = []
    lines: List[str] = []
    offset: int = 0
    for name in TinyFcn.parameter_names(model.layer_count):
        value: np.ndarray = model.parameters[name]
        blob: bytes = encode_segt(_as_planes(value))
        lines.append(f"{name} {_format_shape(value.shape)} {offset}")
        blobs.append(blob)
        offset += len(blob)

    path: Path = directory / CHECKPOINT_FILE
    path.write_bytes(b"".join(blobs))
    (directory / CHECKPOINT_MANIFEST).write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info(f"Saved {len(lines)} parameter tensors ({offset} bytes) to {path}")
    return path


def load_checkpoint(directory: PathLike, dtype: np.dtype = np.float64) -> TinyFcn:
    directory = Path(directory)
    if directory.is_file():
        directory = directory.parent
    manifest: Path = directory / CHECKPOINT_MANIFEST
    buffer: bytes = (directory / CHECKPOINT_FILE).read_bytes()

    parameters: Dict[str, np.ndarray] = {}
    for line in manifest.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        try:
            name, shape_text, offset_text = line.split()
        except ValueError as exc:
            raise GridFormatError(f"bad checkpoint manifest line {line!r}") from exc
        shape: Tuple[int, ...] = _parse_shape(shape_text)
        planes, _ = decode_segt(buffer, int(offset_text))
        if planes.size != int(np.prod(shape)):
            raise GridFormatError(f"{name}: manifest shape {shape} does not match stored size {planes.size}")
        parameters[name] = planes.reshape(shape).astype(dtype)
    return TinyFcn(parameters)
