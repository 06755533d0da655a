"""Location priors ``pi(x* | x_known)``.

Three variants share one small interface: ``logpdf(points)`` evaluates the
(log) density row-wise and ``joint_logpdf(x_star)`` evaluates the prior of a
set of missing locations, which factorizes over components.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import InputError
from .model import LOG_2PI, Rect, as_points


class LocationPrior:
    """Common behaviour of factorizing location priors."""

    def logpdf(self, points) -> np.ndarray:
        raise NotImplementedError

    def joint_logpdf(self, x_star) -> float:
        return float(np.sum(self.logpdf(x_star)))


@dataclass(frozen=True)
class UniformRect(LocationPrior):
    rect: Rect

    def __post_init__(self):
        if self.rect.area <= 0:
            raise InputError("uniform prior needs a rectangle of positive area")

    def logpdf(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        inside = self.rect.contains(pts)
        return np.where(inside, -math.log(self.rect.area), -np.inf)


class KdePrior(LocationPrior):
    """Gaussian kernel density estimate with a full bandwidth matrix.

    If ``rect`` is given the density is set to zero outside it (no
    renormalization, so values inside are the plain KDE).
    """

    def __init__(self, points, bandwidth=None, rect: Rect | None = None):
        self.points = as_points(points, "kde points")
        if bandwidth is None:
            bandwidth = plugin_bandwidth(self.points)
        h = np.asarray(bandwidth, dtype=float)
        if h.shape != (2, 2) or not np.all(np.isfinite(h)):
            raise InputError(f"bandwidth must be a finite 2x2 matrix, got shape {h.shape}")
        if not np.allclose(h, h.T, rtol=1e-12, atol=0):
            raise InputError("bandwidth matrix must be symmetric")
        h = 0.5 * (h + h.T)
        try:
            chol = np.linalg.cholesky(h)
        except np.linalg.LinAlgError:
            raise InputError("bandwidth matrix must be positive definite") from None
        self.bandwidth = h
        self.rect = rect
        self._chol_inv = np.linalg.inv(chol)
        self._log_norm = -LOG_2PI - np.sum(np.log(np.diag(chol))) - math.log(self.points.shape[0])

    def logpdf(self, points, block: int = 2048) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        out = np.empty(pts.shape[0])
        for start in range(0, pts.shape[0], block):
            chunk = pts[start : start + block]
            diff = chunk[:, None, :] - self.points[None, :, :]
            z = diff @ self._chol_inv.T
            quad = np.einsum("ijk,ijk->ij", z, z)
            out[start : start + block] = logsumexp(-0.5 * quad, axis=1) + self._log_norm
        if self.rect is not None:
            out[~self.rect.contains(pts)] = -np.inf
        return out


class IntensityPrior(LocationPrior):
    """Piecewise-constant intensity on a regular raster.

    ``values`` has shape ``(ny, nx)``; cell ``[j, i]`` covers
    ``[x0 + i*dx, x0 + (i+1)*dx] x [y0 + j*dy, y0 + (j+1)*dy]``. The log
    density is ``log lambda`` of the containing cell (unnormalized).
    """

    def __init__(self, values, x0: float, y0: float, dx: float, dy: float, covariates=None, beta=None):
        vals = np.asarray(values, dtype=float)
        if vals.ndim != 2:
            raise InputError("intensity raster must be two-dimensional")
        if not np.all(np.isfinite(vals)):
            raise InputError("intensity raster contains non-finite values")
        if np.any(vals < 0):
            raise InputError("intensity raster values must be >= 0")
        if not np.any(vals > 0):
            raise InputError("intensity raster is identically zero")
        if not (dx > 0 and dy > 0):
            raise InputError("raster cell sizes must be positive")
        self.values = vals
        self.x0, self.y0, self.dx, self.dy = float(x0), float(y0), float(dx), float(dy)
        self.covariates = covariates
        self.beta = beta

    @property
    def shape(self):
        return self.values.shape

    @property
    def rect(self) -> Rect:
        ny, nx = self.values.shape
        return Rect(self.x0, self.x0 + nx * self.dx, self.y0, self.y0 + ny * self.dy)

    def cell_index(self, points):
        """Raster indices ``(j, i)`` of the containing cells and an inside mask."""
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        ny, nx = self.values.shape
        i = np.floor((pts[:, 0] - self.x0) / self.dx).astype(int)
        j = np.floor((pts[:, 1] - self.y0) / self.dy).astype(int)
        # the far edges belong to the last cell
        i = np.where(pts[:, 0] == self.x0 + nx * self.dx, nx - 1, i)
        j = np.where(pts[:, 1] == self.y0 + ny * self.dy, ny - 1, j)
        inside = (i >= 0) & (i < nx) & (j >= 0) & (j < ny)
        return j, i, inside

    def cell_centers(self) -> np.ndarray:
        ny, nx = self.values.shape
        xs = self.x0 + (np.arange(nx) + 0.5) * self.dx
        ys = self.y0 + (np.arange(ny) + 0.5) * self.dy
        gx, gy = np.meshgrid(xs, ys)
        return np.column_stack([gx.ravel(), gy.ravel()])

    def logpdf(self, points) -> np.ndarray:
        j, i, inside = self.cell_index(points)
        out = np.full(inside.shape, -np.inf)
        with np.errstate(divide="ignore"):
            out[inside] = np.log(self.values[j[inside], i[inside]])
        return out


def prior_logdensity(x, prior: LocationPrior) -> float:
    """Log prior density at a single point ``x``."""
    return float(prior.logpdf(np.asarray(x, dtype=float).reshape(1, 2))[0])


def plugin_bandwidth(points) -> np.ndarray:
    """Plug-in bandwidth ``H = n^(-1/6) V`` with ``V`` the sample covariance."""
    pts = as_points(points, "points")
    n = pts.shape[0]
    if n < 3:
        raise InputError(f"plug-in bandwidth needs at least 3 points, got {n}; supply H explicitly")
    v = np.cov(pts, rowvar=False)
    eig = np.linalg.eigvalsh(v)
    if eig[0] <= 1e-12 * max(eig[1], 1e-300):
        raise InputError("points are collinear or degenerate; supply the bandwidth matrix explicitly")
    return n ** (-1.0 / 6.0) * v


def intensity_from_covariates(covariates, beta, x0: float, y0: float, dx: float, dy: float) -> IntensityPrior:
    """Build ``lambda(x) = d(x)' beta`` from a ``(ny, nx, p)`` covariate raster."""
    d = np.asarray(covariates, dtype=float)
    if d.ndim == 2:
        d = d[:, :, None]
    b = np.atleast_1d(np.asarray(beta, dtype=float))
    if d.ndim != 3 or d.shape[2] != b.size:
        raise InputError(f"covariate raster shape {d.shape} incompatible with {b.size} coefficients")
    lam = d @ b
    bad = np.argwhere(lam < 0)
    if bad.size:
        cells = ", ".join(f"(row {j}, col {i})" for j, i in bad[:10])
        more = "" if len(bad) <= 10 else f" and {len(bad) - 10} more"
        raise InputError(f"negative intensity in cells {cells}{more}")
    return IntensityPrior(lam, x0, y0, dx, dy, covariates=d, beta=b)
