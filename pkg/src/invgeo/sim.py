"""Simulation of measurements under the Gaussian model."""
from __future__ import annotations

import numpy as np

from .model import ModelParams, as_points, cholesky_jitter, covariance_matrix


def simulate_measurements(locations, params: ModelParams, seed=None) -> np.ndarray:
    """One draw of ``Y = mu + S(x) + Z`` at ``locations``.

    Exact at the supplied points: ``mu + L @ e`` with ``L`` the Cholesky
    factor of the full covariance and ``e`` i.i.d. standard normal.
    """
    pts = as_points(locations)
    rng = np.random.default_rng(seed)
    eps = rng.standard_normal(pts.shape[0])
    if params.total_variance == 0:
        return np.full(pts.shape[0], params.mu)
    chol = cholesky_jitter(covariance_matrix(pts, params), scale=params.total_variance)
    return params.mu + chol @ eps
