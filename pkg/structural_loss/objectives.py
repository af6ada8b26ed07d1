from __future__ import annotations

from typing import Callable, Dict, Optional

import numpy as np

from .choices import LossKind
from .grids import sigmoid_array
from .reports import LossReport
from .ssim import SsimParams, ssim_loss_arrays, ssim_ms_loss_arrays
from .ssl import SslParams, bce_mean_arrays, combined_arrays, softmax_ce_arrays, ssl_arrays

Objective = Callable[[np.ndarray, np.ndarray, Optional[np.ndarray], SslParams, SsimParams], LossReport]


def _ce(y: np.ndarray, z: np.ndarray, valid: Optional[np.ndarray], ssl: SslParams, ssim: SsimParams) -> LossReport:
    return softmax_ce_arrays(y, z, valid)


def _bce(y: np.ndarray, z: np.ndarray, valid: Optional[np.ndarray], ssl: SslParams, ssim: SsimParams) -> LossReport:
    return bce_mean_arrays(y, z, valid)


def _ssim(y: np.ndarray, z: np.ndarray, valid: Optional[np.ndarray], ssl: SslParams, ssim: SsimParams) -> LossReport:
    return ssim_loss_arrays(y, sigmoid_array(z), ssl.window, ssim, valid)


def _ssim_ms(
    y: np.ndarray, z: np.ndarray, valid: Optional[np.ndarray], ssl: SslParams, ssim: SsimParams
) -> LossReport:
    return ssim_ms_loss_arrays(y, sigmoid_array(z), ssl.window, ssim.c2, valid)


def _ssl(y: np.ndarray, z: np.ndarray, valid: Optional[np.ndarray], ssl: SslParams, ssim: SsimParams) -> LossReport:
    return ssl_arrays(y, z, ssl, valid).as_loss_report()


def _combined(
    y: np.ndarray, z: np.ndarray, valid: Optional[np.ndarray], ssl: SslParams, ssim: SsimParams
) -> LossReport:
    return combined_arrays(y, z, ssl, valid)


# The SSIM baselines share the SSL window so region size and sigma sweep both.
OBJECTIVES: Dict[str, Objective] = {
    LossKind.CE: _ce,
    LossKind.BCE: _bce,
    LossKind.SSIM: _ssim,
    LossKind.SSIM_MS: _ssim_ms,
    LossKind.SSL: _ssl,
    LossKind.COMBINED: _combined,
}


def evaluate_objective(
    kind: str,
    y: np.ndarray,
    z: np.ndarray,
    valid: Optional[np.ndarray] = None,
    ssl: SslParams = SslParams(),
    ssim: SsimParams = SsimParams(),
) -> LossReport:
    """Evaluate the loss selected by `kind` on (..., C, H, W) targets and logits."""
    try:
        objective: Objective = OBJECTIVES[LossKind(kind)]
    except ValueError as exc:
        raise ValueError(f"Unknown loss kind {kind!r}; expected one of {list(LossKind.values)}") from exc
    return objective(y, z, valid, ssl, ssim)
