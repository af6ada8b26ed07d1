from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np


@dataclass(frozen=True)
class LossReport:
    """
    Result of one loss evaluation.

    `loss_map` holds each element's contribution to `total_loss` (it sums to
    the total); `gradient` is taken with respect to the logits and has the
    same (..., C, H, W) shape.
    """

    total_loss: float
    loss_map: np.ndarray
    gradient: np.ndarray
    hard_count: Optional[int] = None
    hard_proportion: Optional[float] = None
    components: Mapping[str, "LossReport"] = field(default_factory=dict)


@dataclass(frozen=True)
class SslReport:
    total_loss: float
    loss_map: np.ndarray
    error_map: np.ndarray
    hard_mask: np.ndarray
    hard_count: int
    hard_proportion: float
    gradient: np.ndarray
    e_max: float

    def as_loss_report(self) -> LossReport:
        return LossReport(
            total_loss=self.total_loss,
            loss_map=self.loss_map,
            gradient=self.gradient,
            hard_count=self.hard_count,
            hard_proportion=self.hard_proportion,
        )


def loss_share(loss_map: np.ndarray, index: tuple[int, ...]) -> float:
    """Fraction of the total loss carried by one element."""
    total: float = float(loss_map.sum())
    if total == 0.0:
        return 0.0
    return float(loss_map[index]) / total
