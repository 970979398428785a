from __future__ import annotations

import numpy as np

# adequacy threshold on the yearly mean RMSE, in pu
RMSE_THRESHOLD = 1e-3


def rmse(Y, Y_hat) -> float:
    """Root mean squared error over all observations and all buses."""
    Y = np.asarray(Y, float)
    Y_hat = np.asarray(Y_hat, float)
    if Y.shape != Y_hat.shape:
        raise ValueError(f"shape mismatch {Y.shape} vs {Y_hat.shape}")
    if Y.size == 0:
        raise ValueError("rmse of an empty array")
    d = Y - Y_hat
    return float(np.sqrt(np.mean(d * d)))


def rmse_per_column(Y, Y_hat) -> np.ndarray:
    d = np.asarray(Y, float) - np.asarray(Y_hat, float)
    return np.sqrt(np.mean(d * d, axis=0))


def verdict(value, threshold=RMSE_THRESHOLD) -> bool:
    return bool(value <= threshold)
