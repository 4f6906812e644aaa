"""Squared-exponential kernel shared by the diffusion-map and regression modules.

Both modules must assemble the matrix through this single routine so that a
kernel computed for the spectral embedding can be handed to the regressor and
match a freshly computed one bit for bit.
"""
from __future__ import annotations

import numpy as np
from scipy.spatial.distance import cdist


def gaussian_kernel(x: np.ndarray, y: np.ndarray, eps: float) -> np.ndarray:
    """Kernel matrix K_ij = exp(-||x_i - y_j||^2 / (2 eps)).

    cdist evaluates each squared distance with the same summation order for
    (i, j) and (j, i), so the self-kernel is exactly symmetric.
    """
    if eps <= 0:
        raise ValueError(f"kernel bandwidth must be positive, got {eps}")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    sq = cdist(x, y, "sqeuclidean")
    return np.exp(-sq / (2.0 * eps))
