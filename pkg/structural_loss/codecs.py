"""
File formats for maps.

Labels travel as binary PGM (P5, 8-bit, value = class id, 255 = void).
Real-valued tensors use SEGT: the magic bytes ``SEGT``, then H, W, C as
little-endian uint32, then H*W*C little-endian float32 values in row-major,
channel-outermost order.
"""
from __future__ import annotations

import logging
import struct
from pathlib import Path
from typing import Final, Optional, Union

import numpy as np

from .exceptions import GridFormatError
from .grids import VOID, LabelMap, planes_from_flat

logger: logging.Logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

SEGT_MAGIC: Final[bytes] = b"SEGT"
PGM_MAGIC: Final[bytes] = b"P5"
_SEGT_HEADER: Final[struct.Struct] = struct.Struct("<4sIII")
_SEGT_DTYPE: Final[np.dtype] = np.dtype("<f4")


def sniff_format(path: PathLike) -> str:
    """Return "pgm" or "segt" from the leading magic bytes."""
    with open(path, "rb") as handle:
        head: bytes = handle.read(4)
    if head == SEGT_MAGIC:
        return "segt"
    if head[:2] == PGM_MAGIC:
        return "pgm"
    raise GridFormatError(f"{path}: unrecognised magic bytes {head!r}")


def encode_segt(planes: np.ndarray) -> bytes:
    planes = np.asarray(planes)
    if planes.ndim != 3:
        raise GridFormatError(f"SEGT stores (channels, height, width) arrays, got shape {planes.shape}")
    channels, height, width = planes.shape
    header: bytes = _SEGT_HEADER.pack(SEGT_MAGIC, height, width, channels)
    return header + np.ascontiguousarray(planes, dtype=_SEGT_DTYPE).tobytes()


def decode_segt(buffer: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    """Decode one SEGT blob starting at `offset`; returns (planes, offset after the blob)."""
    if len(buffer) - offset < _SEGT_HEADER.size:
        raise GridFormatError("SEGT payload is shorter than its header")
    magic, height, width, channels = _SEGT_HEADER.unpack_from(buffer, offset)
    if magic != SEGT_MAGIC:
        raise GridFormatError(f"bad SEGT magic {magic!r}")

    start: int = offset + _SEGT_HEADER.size
    count: int = height * width * channels
    end: int = start + count * _SEGT_DTYPE.itemsize
    if end > len(buffer):
        raise GridFormatError(f"SEGT payload truncated: expected {count} values for {height}x{width}x{channels}")

    flat: np.ndarray = np.frombuffer(buffer, dtype=_SEGT_DTYPE, count=count, offset=start)
    return planes_from_flat(flat.astype(np.float64), height, width, channels), end


def read_segt(path: PathLike) -> np.ndarray:
    buffer: bytes = Path(path).read_bytes()
    planes, end = decode_segt(buffer)
    if end != len(buffer):
        raise GridFormatError(f"{path}: {len(buffer) - end} trailing bytes after SEGT payload")
    logger.debug(f"Read SEGT {path} with shape {planes.shape}")
    return planes


def write_segt(path: PathLike, planes: np.ndarray) -> None:
    Path(path).write_bytes(encode_segt(planes))


def _pgm_tokens(buffer: bytes, count: int) -> tuple[list[bytes], int]:
    tokens: list[bytes] = []
    position: int = 0
    while len(tokens) < count:
        if position >= len(buffer):
            raise GridFormatError("PGM header truncated")
        char: bytes = buffer[position : position + 1]
        if char == b"#":
            newline: int = buffer.find(b"\n", position)
            position = len(buffer) if newline < 0 else newline + 1
        elif char.isspace():
            position += 1
        else:
            start: int = position
            while position < len(buffer) and not buffer[position : position + 1].isspace():
                position += 1
            tokens.append(buffer[start:position])
    # exactly one whitespace byte separates maxval from the raster
    return tokens, position + 1


def read_pgm_array(path: PathLike) -> np.ndarray:
    buffer: bytes = Path(path).read_bytes()
    tokens, offset = _pgm_tokens(buffer, 4)
    if tokens[0] != PGM_MAGIC:
        raise GridFormatError(f"{path}: bad PGM magic {tokens[0]!r}")
    try:
        width, height, max_value = (int(token) for token in tokens[1:])
    except ValueError as exc:
        raise GridFormatError(f"{path}: malformed PGM header") from exc
    if width < 1 or height < 1:
        raise GridFormatError(f"{path}: PGM dimensions must be positive, got {width}x{height}")
    if not 0 < max_value <= 255:
        raise GridFormatError(f"{path}: only 8-bit PGM is supported, maxval={max_value}")

    raster: bytes = buffer[offset : offset + width * height]
    if len(raster) != width * height:
        raise GridFormatError(f"{path}: PGM raster truncated")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width).copy()


def write_pgm_array(path: PathLike, pixels: np.ndarray) -> None:
    pixels = np.asarray(pixels)
    if pixels.ndim != 2:
        raise GridFormatError(f"PGM stores (height, width) arrays, got shape {pixels.shape}")
    height, width = pixels.shape
    header: bytes = f"P5\n{width} {height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + np.ascontiguousarray(pixels, dtype=np.uint8).tobytes())


def read_labels(path: PathLike, class_count: Optional[int] = None) -> LabelMap:
    """
    Load a label PGM. Without an explicit class count the largest non-void id
    decides it.
    """
    ids: np.ndarray = read_pgm_array(path).astype(np.int64)
    if class_count is None:
        labelled: np.ndarray = ids[ids != VOID]
        class_count = int(labelled.max()) + 1 if labelled.size else 1
    return LabelMap(ids, class_count)


def write_labels(path: PathLike, labels: LabelMap) -> None:
    write_pgm_array(path, labels.ids.astype(np.uint8))
