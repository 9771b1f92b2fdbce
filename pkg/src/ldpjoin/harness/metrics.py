"""Error metrics over repeated runs."""

from __future__ import annotations

import numpy as np


def absolute_error(truth: float, estimates) -> float:
    """AE = (1/t) sum |J - J_hat|."""
    est = np.asarray(estimates, dtype=np.float64)
    if est.size == 0:
        raise ValueError("need at least one estimate")
    return float(np.mean(np.abs(truth - est)))


def relative_error(truth: float, estimates) -> float:
    """RE = (1/t) sum |J - J_hat| / J; undefined for J = 0."""
    if truth == 0:
        raise ValueError("relative error is undefined for a zero true join size")
    return absolute_error(truth, estimates) / abs(truth)


def mean_squared_error(true_freqs, est_freqs) -> float:
    """MSE = (1/n) sum (f - f_hat)^2 over the n estimated values."""
    f = np.asarray(true_freqs, dtype=np.float64)
    g = np.asarray(est_freqs, dtype=np.float64)
    if f.shape != g.shape or f.size == 0:
        raise ValueError(f"frequency vectors must be non-empty and aligned, got {f.shape} and {g.shape}")
    return float(np.mean((f - g) ** 2))
