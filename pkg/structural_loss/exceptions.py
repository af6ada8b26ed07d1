from __future__ import annotations

from typing import Any, Dict, Optional, Sequence


class GridValidationError(ValueError):
    """Raised when a map is constructed from values that break its invariants."""


class GridFormatError(ValueError):
    """Raised when a PGM or SEGT payload cannot be parsed."""


class ShapeMismatchError(ValueError):
    def __init__(self, left: Sequence[int], right: Sequence[int], what: str = "maps") -> None:
        self.left: tuple[int, ...] = tuple(left)
        self.right: tuple[int, ...] = tuple(right)
        super().__init__(f"Shape mismatch between {what}: {self.left} vs {self.right}")


class EmptyConfusionMatrixError(ValueError):
    def __init__(self) -> None:
        super().__init__("no pixels evaluated")


class NonFiniteLossError(RuntimeError):
    """
    Training hit a NaN or infinite loss. `state` holds the diagnostic dump.
    """

    def __init__(self, message: str, state: Optional[Dict[str, Any]] = None) -> None:
        super().__init__(message)
        self.state: Dict[str, Any] = state or {}
