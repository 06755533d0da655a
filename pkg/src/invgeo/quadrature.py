"""Grid quadrature for the predictive distribution of a single missing location,
plus highest-density regions and point summaries of discrete fields."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import CapabilityError, InputError
from .model import ModelParams, OrphanLikelihood, Rect, SpatialDataset
from .priors import LocationPrior


@dataclass(frozen=True)
class Grid:
    """Regular ``nx`` by ``ny`` lattice of cell centres covering ``rect``.

    Flat node index ``k = j * nx + i`` (row-major, ``x`` varies fastest).
    """

    rect: Rect
    nx: int = 100
    ny: int = 100

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise InputError(f"grid resolution must be positive, got {self.nx}x{self.ny}")
        if self.rect.width < 0 or self.rect.height < 0:
            raise InputError("grid rectangle has negative extent")

    @property
    def size(self) -> int:
        return self.nx * self.ny

    @property
    def dx(self) -> float:
        return self.rect.width / self.nx

    @property
    def dy(self) -> float:
        return self.rect.height / self.ny

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    @property
    def xs(self) -> np.ndarray:
        return self.rect.xmin + (np.arange(self.nx) + 0.5) * self.dx

    @property
    def ys(self) -> np.ndarray:
        return self.rect.ymin + (np.arange(self.ny) + 0.5) * self.dy

    def nodes(self) -> np.ndarray:
        gx, gy = np.meshgrid(self.xs, self.ys)
        return np.column_stack([gx.ravel(), gy.ravel()])

    def cell_index(self, points) -> np.ndarray:
        """Flat index of the cell containing each point, -1 outside the grid."""
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        with np.errstate(divide="ignore", invalid="ignore"):
            i = np.floor((pts[:, 0] - self.rect.xmin) / self.dx) if self.dx > 0 else np.zeros(len(pts))
            j = np.floor((pts[:, 1] - self.rect.ymin) / self.dy) if self.dy > 0 else np.zeros(len(pts))
        i = np.where(pts[:, 0] == self.rect.xmax, self.nx - 1, i)
        j = np.where(pts[:, 1] == self.rect.ymax, self.ny - 1, j)
        inside = self.rect.contains(pts) & (i >= 0) & (i < self.nx) & (j >= 0) & (j < self.ny)
        idx = np.full(pts.shape[0], -1, dtype=int)
        idx[inside] = (j[inside] * self.nx + i[inside]).astype(int)
        return idx

    def refine(self, factor: int = 2) -> "Grid":
        return Grid(self.rect, self.nx * factor, self.ny * factor)


@dataclass
class PredictiveField:
    """Normalized discrete density ``h`` over the nodes of a grid."""

    grid: Grid
    weights: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if w.size != self.grid.size:
            raise InputError(f"{w.size} weights for a grid of {self.grid.size} nodes")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise InputError("field weights must be finite and non-negative")
        total = w.sum()
        if abs(total - 1.0) > 1e-10:
            raise InputError(f"field weights sum to {total}, not 1")
        self.weights = w

    def as_image(self) -> np.ndarray:
        """Weights reshaped to ``(ny, nx)``."""
        return self.weights.reshape(self.grid.ny, self.grid.nx)

    def density(self) -> np.ndarray:
        """Weights divided by the cell area (a density per unit area)."""
        return self.weights / self.grid.cell_area


def predict_single(
    data: SpatialDataset,
    params: ModelParams,
    prior: LocationPrior,
    grid: Grid | None = None,
) -> PredictiveField:
    """Predictive distribution of the single missing location on ``grid``.

    Node weights are proportional to ``prior(w) * p(y* | y_known, w)``; known
    locations are used at their exact coordinates.
    """
    if data.n_orphans != 1:
        raise CapabilityError(
            f"grid quadrature handles exactly one missing location, got {data.n_orphans}; "
            "use the MCMC sampler for several"
        )
    if grid is None:
        grid = Grid(data.region, 100, 100)
    nodes = grid.nodes()
    log_w = np.asarray(prior.logpdf(nodes), dtype=float)
    support = np.isfinite(log_w)
    if not np.any(support):
        raise InputError("prior assigns zero density to every grid node")
    lik = OrphanLikelihood(data, params)
    log_w[support] += lik.logdensity_nodes(nodes[support])
    return field_from_log_weights(
        grid, log_w, provenance={"params": params.as_dict(), "prior": type(prior).__name__}
    )


def field_from_log_weights(grid: Grid, log_w, provenance=None) -> PredictiveField:
    log_w = np.asarray(log_w, dtype=float)
    finite = np.isfinite(log_w)
    if not np.any(finite):
        raise InputError("all log weights are -inf")
    w = np.zeros_like(log_w)
    w[finite] = np.exp(log_w[finite] - log_w[finite].max())
    w /= w.sum()
    return PredictiveField(grid, w, provenance or {})


def _weights_of(field_or_weights) -> np.ndarray:
    if isinstance(field_or_weights, PredictiveField):
        return field_or_weights.weights
    return np.asarray(field_or_weights, dtype=float).reshape(-1)


def hdr(field_or_weights, alpha: float) -> np.ndarray:
    """Highest-density region of coverage ``1 - alpha``.

    Nodes are added in decreasing weight order (ties by index) until the
    included mass reaches ``1 - alpha``. Zero-weight nodes are never
    included. Returns sorted node indices.
    """
    if not 0 < alpha < 1:
        raise InputError(f"alpha must lie in (0, 1), got {alpha}")
    w = _weights_of(field_or_weights)
    order = np.argsort(-w, kind="stable")
    cum = np.cumsum(w[order])
    target = (1.0 - alpha) * cum[-1]
    # relative slack absorbs rounding in the cumulative sum
    k = int(np.searchsorted(cum, target - 1e-12 * cum[-1], side="left")) + 1
    k = min(k, int(np.count_nonzero(w > 0)))
    return np.sort(order[:k])


def hdr_mask(field: PredictiveField, alpha: float) -> np.ndarray:
    mask = np.zeros(field.grid.size, dtype=bool)
    mask[hdr(field, alpha)] = True
    return mask


def count_components(mask_image: np.ndarray) -> int:
    """Number of 4-connected components of a boolean ``(ny, nx)`` image."""
    _, n = ndimage.label(mask_image)
    return int(n)


@dataclass(frozen=True)
class Summary:
    mean: np.ndarray
    mode: np.ndarray
    median: np.ndarray

    def as_dict(self) -> dict:
        return {
            "mean_x": float(self.mean[0]),
            "mean_y": float(self.mean[1]),
            "mode_x": float(self.mode[0]),
            "mode_y": float(self.mode[1]),
            "median_x": float(self.median[0]),
            "median_y": float(self.median[1]),
        }


def _weighted_median(values: np.ndarray, weights: np.ndarray) -> float:
    cum = np.cumsum(weights)
    k = int(np.searchsorted(cum, 0.5 * cum[-1] - 1e-12 * cum[-1], side="left"))
    return float(values[min(k, values.size - 1)])


def summarize(field: PredictiveField) -> Summary:
    """Mean, mode (first index on ties) and component-wise median of a field."""
    nodes = field.grid.nodes()
    w = field.weights
    mean = w @ nodes
    mode = nodes[int(np.argmax(w))]
    img = field.as_image()
    median = np.array(
        [
            _weighted_median(field.grid.xs, img.sum(axis=0)),
            _weighted_median(field.grid.ys, img.sum(axis=1)),
        ]
    )
    return Summary(mean=mean, mode=mode, median=median)


def bin_samples(points, grid: Grid) -> np.ndarray:
    """Fraction of ``points`` falling in each grid cell (points outside are dropped)."""
    idx = grid.cell_index(points)
    idx = idx[idx >= 0]
    counts = np.bincount(idx, minlength=grid.size).astype(float)
    if counts.sum() == 0:
        raise InputError("no samples fall inside the grid")
    return counts / counts.sum()


def total_variation(p, q) -> float:
    """Half the L1 distance between two discrete probability vectors."""
    p = _weights_of(p)
    q = _weights_of(q)
    if p.shape != q.shape:
        raise InputError(f"shape mismatch {p.shape} vs {q.shape}")
    return 0.5 * float(np.abs(p - q).sum())


def aggregate(field: PredictiveField, factor: int) -> np.ndarray:
    """Sum a fine field's weights back onto a grid ``factor`` times coarser."""
    g = field.grid
    if g.nx % factor or g.ny % factor:
        raise InputError(f"grid {g.nx}x{g.ny} is not divisible by {factor}")
    img = field.as_image().reshape(g.ny // factor, factor, g.nx // factor, factor)
    return img.sum(axis=(1, 3)).ravel()
