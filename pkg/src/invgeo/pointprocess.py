"""Sampling-design simulators and the inhibitory location prior."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError, PackingInfeasibleError
from .model import Rect, as_points, distance_matrix
from .priors import IntensityPrior, LocationPrior

UNIT_SQUARE = Rect(0.0, 1.0, 0.0, 1.0)


def sample_uniform(n: int, rect: Rect = UNIT_SQUARE, seed=None) -> np.ndarray:
    """``n`` independent uniform points on ``rect``."""
    if n < 1:
        raise InputError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    u = rng.random((n, 2))
    return np.column_stack(
        [rect.xmin + u[:, 0] * rect.width, rect.ymin + u[:, 1] * rect.height]
    )


def sample_intensity(n: int, prior: IntensityPrior, seed=None) -> np.ndarray:
    """Inhomogeneous Poisson process conditioned on ``n`` points.

    A cell is chosen with probability proportional to ``lambda * area``, then
    the point is uniform within the cell.
    """
    if n < 1:
        raise InputError(f"n must be >= 1, got {n}")
    if not isinstance(prior, IntensityPrior):
        raise InputError("sample_intensity needs an intensity prior")
    weights = prior.values.ravel() * (prior.dx * prior.dy)
    total = weights.sum()
    if not total > 0:
        raise InputError("intensity raster is identically zero")
    rng = np.random.default_rng(seed)
    cells = rng.choice(weights.size, size=n, p=weights / total)
    ny, nx = prior.values.shape
    j, i = np.divmod(cells, nx)
    u = rng.random((n, 2))
    return np.column_stack(
        [prior.x0 + (i + u[:, 0]) * prior.dx, prior.y0 + (j + u[:, 1]) * prior.dy]
    )


@dataclass(frozen=True)
class SsiConfig:
    """Simple sequential inhibition on a regular lattice of cell centres."""

    delta: float
    n: int
    lattice: tuple[int, int] = (100, 100)
    rect: Rect = UNIT_SQUARE

    def __post_init__(self):
        if not (self.delta >= 0 and math.isfinite(self.delta)):
            raise InputError(f"delta must be finite and >= 0, got {self.delta}")
        if self.n < 1:
            raise InputError(f"n must be >= 1, got {self.n}")
        if min(self.lattice) < 1:
            raise InputError(f"lattice resolution must be positive, got {self.lattice}")

    def lattice_points(self) -> np.ndarray:
        nx, ny = self.lattice
        r = self.rect
        xs = r.xmin + (np.arange(nx) + 0.5) * r.width / nx
        ys = r.ymin + (np.arange(ny) + 0.5) * r.height / ny
        gx, gy = np.meshgrid(xs, ys)
        return np.column_stack([gx.ravel(), gy.ravel()])


def sample_ssi(config: SsiConfig, seed=None, retries: int = 0) -> np.ndarray:
    """Draw ``config.n`` lattice points sequentially, each uniform among the
    lattice points not yet used and at distance >= delta from all accepted ones.

    Raises :class:`PackingInfeasibleError` if the admissible set empties
    first. With ``retries > 0`` a jammed attempt is restarted from scratch
    (continuing the same random stream) up to that many times.
    """
    rng = np.random.default_rng(seed)
    lattice = config.lattice_points()
    for attempt in range(retries + 1):
        try:
            points = _ssi_attempt(config, lattice, rng)
            break
        except PackingInfeasibleError:
            if attempt == retries:
                raise
    if config.n > 1 and config.delta > 0:
        d = distance_matrix(points, points)
        np.fill_diagonal(d, np.inf)
        assert d.min() >= config.delta, "inhibition constraint violated"
    return points


def _ssi_attempt(config: SsiConfig, lattice: np.ndarray, rng) -> np.ndarray:
    admissible = np.ones(lattice.shape[0], dtype=bool)
    delta2 = config.delta**2
    chosen = np.empty(config.n, dtype=int)
    for k in range(config.n):
        candidates = np.flatnonzero(admissible)
        if candidates.size == 0:
            raise PackingInfeasibleError(k, config.n, config.delta)
        idx = candidates[rng.integers(candidates.size)]
        chosen[k] = idx
        admissible[idx] = False
        if delta2 > 0:
            d2 = np.sum((lattice[candidates] - lattice[idx]) ** 2, axis=1)
            admissible[candidates[d2 < delta2]] = False
    return lattice[chosen]


def ssi_conditional_logdensity(x_star, known, delta: float, mutual: bool = True) -> float:
    """0 if every missing location keeps distance >= delta from the known
    points (and, if ``mutual``, from the other missing points), else -inf."""
    x_star = as_points(x_star, "x_star")
    known = as_points(known, "known")
    if np.any(distance_matrix(x_star, known) < delta):
        return -math.inf
    if mutual and x_star.shape[0] > 1:
        d = distance_matrix(x_star, x_star)
        np.fill_diagonal(d, np.inf)
        if np.any(d < delta):
            return -math.inf
    return 0.0


class InhibitionPrior(LocationPrior):
    """Uniform prior on the part of ``rect`` admissible under inhibition.

    Does not factorize over missing locations when ``mutual`` is set.
    """

    def __init__(self, rect: Rect, known, delta: float, mutual: bool = True):
        if not delta > 0:
            raise InputError(f"delta must be > 0, got {delta}")
        if rect.area <= 0:
            raise InputError("inhibition prior needs a rectangle of positive area")
        self.rect = rect
        self.known = as_points(known, "known")
        self.delta = float(delta)
        self.mutual = mutual
        self._log_const = -math.log(rect.area)

    def logpdf(self, points, block: int = 4096) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        ok = self.rect.contains(pts)
        for start in range(0, pts.shape[0], block):
            d = distance_matrix(pts[start : start + block], self.known)
            ok[start : start + block] &= np.all(d >= self.delta, axis=1)
        return np.where(ok, self._log_const, -np.inf)

    def joint_logpdf(self, x_star) -> float:
        x_star = as_points(x_star, "x_star")
        if not np.all(self.rect.contains(x_star)):
            return -math.inf
        base = ssi_conditional_logdensity(x_star, self.known, self.delta, self.mutual)
        return base + x_star.shape[0] * self._log_const
