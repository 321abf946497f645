from __future__ import annotations

import numpy as np

DEFAULT_BETA = 1.0


def smooth_l1(residual, beta: float = DEFAULT_BETA):
    """Elementwise Huber-style loss: 0.5 r^2 / beta inside |r| < beta, |r| - beta/2 outside."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    r = np.asarray(residual, dtype=np.float64)
    a = np.abs(r)
    out = np.where(a < beta, 0.5 * r * r / beta, a - 0.5 * beta)
    return out if out.ndim else float(out)


def smooth_l1_grad(residual, beta: float = DEFAULT_BETA) -> np.ndarray:
    r = np.asarray(residual, dtype=np.float64)
    return np.where(np.abs(r) < beta, r / beta, np.sign(r))
