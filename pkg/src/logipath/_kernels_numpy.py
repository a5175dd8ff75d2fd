"""Pure-numpy kernel implementations; twin of the compiled module.

Matrix products use BLAS through numpy in both backends; the compiled
module only replaces the elementwise and row-reduction kernels below,
which are called often enough on small arrays that fusing their passes
pays off.
"""

from __future__ import annotations

import numpy as np

NAME = "numpy"


def tanh_fwd(x: np.ndarray) -> np.ndarray:
    return np.tanh(x)


def tanh_bwd(y: np.ndarray, g: np.ndarray) -> np.ndarray:
    return g * (1.0 - y * y)


def leaky_fwd(x: np.ndarray, slope: float) -> np.ndarray:
    return np.where(x > 0.0, x, slope * x)


def leaky_bwd(x: np.ndarray, g: np.ndarray, slope: float) -> np.ndarray:
    return np.where(x > 0.0, g, slope * g)


def softmax_rows_fwd(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_rows_bwd(y: np.ndarray, g: np.ndarray) -> np.ndarray:
    inner = (g * y).sum(axis=1, keepdims=True)
    return y * (g - inner)


def layernorm_fwd(
    x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, eps: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    mean = x.mean(axis=1, keepdims=True)
    centered = x - mean
    var = (centered * centered).mean(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    y = centered * inv_std * gamma + beta
    return y, mean.ravel(), inv_std.ravel()


def layernorm_bwd(
    x: np.ndarray,
    gamma: np.ndarray,
    mean: np.ndarray,
    inv_std: np.ndarray,
    g: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    inv = inv_std[:, None]
    xhat = (x - mean[:, None]) * inv
    ggamma = (g * xhat).sum(axis=0)
    gbeta = g.sum(axis=0)
    gy = g * gamma
    m1 = gy.mean(axis=1, keepdims=True)
    m2 = (gy * xhat).mean(axis=1, keepdims=True)
    gx = inv * (gy - m1 - xhat * m2)
    return gx, ggamma, gbeta
