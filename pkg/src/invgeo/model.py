"""Gaussian measurement model: correlation functions, covariance assembly and
the conditional density of orphan measurements given the located data.

The measurement model is ``Y_i = mu + S(x_i) + Z_i`` with ``S`` a zero-mean
isotropic Gaussian process of variance ``sigma2`` and ``Z_i`` i.i.d.
``N(0, tau2)``.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.special import gammaln, kve

from .errors import InputError, NumericalError, SingularityWarning

LOG_2PI = math.log(2.0 * math.pi)

# conditional variances below this are clamped before density evaluation
VARIANCE_FLOOR = 1e-12

JITTER_START = 1e-10
JITTER_RETRIES = 3


class Family(str, enum.Enum):
    EXPONENTIAL = "exponential"
    MATERN = "matern"

    @classmethod
    def parse(cls, value) -> "Family":
        if isinstance(value, Family):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise InputError(
                f"unknown correlation family {value!r}; expected 'exponential' or 'matern'"
            ) from None


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle ``[xmin, xmax] x [ymin, ymax]``."""

    xmin: float
    xmax: float
    ymin: float
    ymax: float

    def __post_init__(self):
        vals = (self.xmin, self.xmax, self.ymin, self.ymax)
        if not all(math.isfinite(v) for v in vals):
            raise InputError(f"rectangle bounds must be finite, got {vals}")
        if self.xmax < self.xmin or self.ymax < self.ymin:
            raise InputError(f"rectangle has negative extent: {vals}")

    @classmethod
    def from_points(cls, points) -> "Rect":
        pts = as_points(points)
        return cls(
            float(pts[:, 0].min()),
            float(pts[:, 0].max()),
            float(pts[:, 1].min()),
            float(pts[:, 1].max()),
        )

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def diameter(self) -> float:
        return math.hypot(self.width, self.height)

    def contains(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        return (
            (pts[:, 0] >= self.xmin)
            & (pts[:, 0] <= self.xmax)
            & (pts[:, 1] >= self.ymin)
            & (pts[:, 1] <= self.ymax)
        )


def as_points(points, name="locations") -> np.ndarray:
    """Coerce to a finite ``(n, 2)`` float array."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1 and arr.size == 2:
        arr = arr.reshape(1, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise InputError(f"{name} must have shape (n, 2), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contain non-finite coordinates")
    return arr


@dataclass(frozen=True)
class ModelParams:
    """Parameters of the Gaussian measurement model.

    ``kappa`` is only used by the Matern family.
    """

    mu: float = 0.0
    sigma2: float = 1.0
    tau2: float = 0.0
    phi: float = 1.0
    kappa: float = 0.5
    family: Family = Family.EXPONENTIAL

    def __post_init__(self):
        object.__setattr__(self, "family", Family.parse(self.family))
        for name in ("mu", "sigma2", "tau2", "phi", "kappa"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise InputError(f"{name} must be finite, got {value}")
            object.__setattr__(self, name, value)
        if self.sigma2 < 0 or self.tau2 < 0:
            raise InputError(f"variances must be >= 0 (sigma2={self.sigma2}, tau2={self.tau2})")
        if self.phi <= 0:
            raise InputError(f"phi must be > 0, got {self.phi}")
        if self.kappa <= 0:
            raise InputError(f"kappa must be > 0, got {self.kappa}")

    @property
    def total_variance(self) -> float:
        return self.sigma2 + self.tau2

    def replace(self, **changes) -> "ModelParams":
        values = {k: getattr(self, k) for k in ("mu", "sigma2", "tau2", "phi", "kappa", "family")}
        values.update(changes)
        return ModelParams(**values)

    def as_dict(self) -> dict:
        return {
            "family": self.family.value,
            "mu": self.mu,
            "sigma2": self.sigma2,
            "tau2": self.tau2,
            "phi": self.phi,
            "kappa": self.kappa,
        }


@dataclass
class SpatialDataset:
    """Located measurements plus orphan values whose locations are missing."""

    known_locations: np.ndarray
    known_values: np.ndarray
    orphan_values: np.ndarray = field(default_factory=lambda: np.empty(0))
    region: Rect | None = None

    def __post_init__(self):
        self.known_locations = as_points(self.known_locations, "known_locations")
        self.known_values = np.asarray(self.known_values, dtype=float).reshape(-1)
        self.orphan_values = np.asarray(self.orphan_values, dtype=float).reshape(-1)
        if self.known_locations.shape[0] < 1:
            raise InputError("dataset needs at least one located measurement")
        if self.known_locations.shape[0] != self.known_values.shape[0]:
            raise InputError(
                f"{self.known_locations.shape[0]} known locations but "
                f"{self.known_values.shape[0]} known values"
            )
        if not (np.all(np.isfinite(self.known_values)) and np.all(np.isfinite(self.orphan_values))):
            raise InputError("measurement values must be finite")
        if self.region is None:
            self.region = Rect.from_points(self.known_locations)
        if not np.all(self.region.contains(self.known_locations)):
            raise InputError("all known locations must lie inside the region")

    @property
    def n_known(self) -> int:
        return self.known_locations.shape[0]

    @property
    def n_orphans(self) -> int:
        return self.orphan_values.shape[0]


def correlation(u, params: ModelParams):
    """Isotropic correlation at distance(s) ``u``.

    Exponential: ``exp(-u/phi)``. Matern:
    ``(u/phi)^kappa K_kappa(u/phi) / (2^(kappa-1) Gamma(kappa))`` with value 1
    at ``u = 0``. Accepts scalars or arrays; returns the same shape.
    """
    u_arr = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u_arr)):
        raise InputError("distances must be finite")
    if np.any(u_arr < 0):
        raise InputError("distances must be non-negative")
    t = u_arr / params.phi
    if params.family is Family.EXPONENTIAL:
        out = np.exp(-t)
    else:
        out = _matern(t, params.kappa)
    if np.ndim(u) == 0:
        return float(out)
    return out


def _matern(t: np.ndarray, kappa: float) -> np.ndarray:
    out = np.ones_like(t)
    pos = t > 0
    if np.any(pos):
        tp = t[pos]
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            # kve(k, t) = K_k(t) * exp(t); working in logs avoids overflow of
            # t^k and K_k(t) separately
            log_k = np.log(kve(kappa, tp)) - tp
            logval = kappa * np.log(tp) + log_k - (kappa - 1.0) * math.log(2.0) - gammaln(kappa)
            val = np.exp(logval)
        # K_k(t) overflows for tiny t, where the correlation is 1 to double precision
        val = np.where(np.isfinite(val), val, 1.0)
        out[pos] = np.minimum(val, 1.0)
    return out


def distance_matrix(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=float).reshape(-1, 2)
    b = np.asarray(b, dtype=float).reshape(-1, 2)
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def cross_covariance(a, b, params: ModelParams) -> np.ndarray:
    """Signal covariance ``sigma2 * rho(|a_i - b_j|)`` (no nugget)."""
    return params.sigma2 * correlation(distance_matrix(a, b), params)


def covariance_matrix(locations, params: ModelParams) -> np.ndarray:
    """Covariance of measurements at ``locations``.

    Diagonal ``sigma2 + tau2``, off-diagonal ``sigma2 * rho(|x_i - x_j|)``.
    Warns with :class:`SingularityWarning` on duplicate locations when
    ``tau2 == 0``.
    """
    pts = as_points(locations)
    d = distance_matrix(pts, pts)
    cov = params.sigma2 * correlation(d, params)
    # overflow here surfaces as non-finite entries at factorization time
    with np.errstate(over="ignore"):
        cov = 0.5 * (cov + cov.T)
    np.fill_diagonal(cov, params.sigma2 + params.tau2)
    if params.tau2 == 0 and pts.shape[0] > 1:
        off = d + np.diag(np.full(pts.shape[0], np.inf))
        if np.any(off == 0):
            warnings.warn(
                "duplicate locations with tau2=0 give a rank-deficient covariance",
                SingularityWarning,
                stacklevel=2,
            )
    return cov


def cholesky_jitter(cov, scale: float | None = None) -> np.ndarray:
    """Lower Cholesky factor of ``cov`` with a diagonal-jitter fallback.

    On failure, ``1e-10 * scale`` is added to the diagonal and the jitter is
    escalated tenfold, up to three retries. ``scale`` defaults to the mean
    diagonal entry.
    """
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise InputError(f"covariance must be square, got shape {cov.shape}")
    if not np.all(np.isfinite(cov)):
        raise NumericalError("covariance contains non-finite entries")
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    if scale is None:
        scale = float(np.mean(np.diag(cov)))
    if not scale > 0:
        scale = 1.0
    eye = np.eye(cov.shape[0])
    jitter = JITTER_START * scale
    for _ in range(JITTER_RETRIES):
        try:
            return np.linalg.cholesky(cov + jitter * eye)
        except np.linalg.LinAlgError:
            jitter *= 10.0
    try:
        cond = float(np.linalg.cond(cov))
    except np.linalg.LinAlgError:
        cond = float("inf")
    raise NumericalError(
        f"Cholesky factorization failed after {JITTER_RETRIES} jitter retries "
        f"(last jitter {jitter / 10.0:.3g}, condition number {cond:.3g})"
    )


def mvn_logdensity(y, mean, cov) -> float:
    """Log density of ``N(mean, cov)`` at ``y`` via a Cholesky factorization."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    mean = np.broadcast_to(np.asarray(mean, dtype=float), y.shape)
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    if cov.shape != (y.size, y.size):
        raise InputError(f"covariance shape {cov.shape} does not match vector length {y.size}")
    chol = cholesky_jitter(cov)
    return _chol_logdensity(y - mean, chol)


def _chol_logdensity(resid: np.ndarray, chol: np.ndarray) -> float:
    z = solve_triangular(chol, resid, lower=True)
    n = resid.size
    return float(-0.5 * n * LOG_2PI - np.sum(np.log(np.diag(chol))) - 0.5 * z @ z)


class OrphanLikelihood:
    """Cached evaluator of ``log p(y* | y_known, x*)``.

    The factorization of the known-data covariance is computed once; each
    evaluation costs one triangular solve against the cross covariance.
    """

    def __init__(self, data: SpatialDataset, params: ModelParams, orphan_values=None):
        self.params = params
        self.known = data.known_locations
        y_star = data.orphan_values if orphan_values is None else orphan_values
        self.y_star = np.atleast_1d(np.asarray(y_star, dtype=float))
        cov = covariance_matrix(self.known, params)
        self.chol = cholesky_jitter(cov, scale=max(params.total_variance, 1e-300))
        self.whitened_resid = solve_triangular(
            self.chol, data.known_values - params.mu, lower=True
        )

    @property
    def n_orphans(self) -> int:
        return self.y_star.size

    def conditional_moments(self, x_star, check: bool = True):
        """Conditional mean vector and covariance of ``Y*`` at ``x_star``."""
        if check:
            x_star = as_points(x_star, "x_star")
            if x_star.shape[0] != self.n_orphans:
                raise InputError(
                    f"{x_star.shape[0]} locations supplied for {self.n_orphans} orphan values"
                )
        p = self.params
        diff = self.known[:, None, :] - x_star[None, :, :]
        dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        k12 = p.sigma2 * (np.exp(-dist / p.phi) if p.family is Family.EXPONENTIAL else _matern(dist / p.phi, p.kappa))
        v = solve_triangular(self.chol, k12, lower=True, check_finite=False)
        mean = p.mu + v.T @ self.whitened_resid
        if x_star.shape[0] > 1:
            cov22 = covariance_matrix(x_star, p)
        else:
            cov22 = np.array([[p.total_variance]])
        cond = cov22 - v.T @ v
        return mean, 0.5 * (cond + cond.T)

    def logdensity(self, x_star, check: bool = True) -> float:
        """Log density of the orphan values placed at ``x_star``.

        Conditional variances are floored at ``VARIANCE_FLOOR``; ``check=False``
        skips input validation for use in tight loops.
        """
        mean, cond = self.conditional_moments(x_star, check=check)
        resid = self.y_star - mean
        if resid.size == 1:
            var = max(cond[0, 0], VARIANCE_FLOOR)
            return float(-0.5 * (LOG_2PI + math.log(var) + resid[0] ** 2 / var))
        diag = np.diag(cond).copy()
        np.fill_diagonal(cond, np.maximum(diag, VARIANCE_FLOOR))
        chol = cholesky_jitter(cond, scale=max(self.params.total_variance, 1e-300))
        return _chol_logdensity(resid, chol)

    def logdensity_nodes(self, nodes, block: int = 4096) -> np.ndarray:
        """Vectorized single-orphan log density at each row of ``nodes``."""
        if self.n_orphans != 1:
            raise InputError("node-wise evaluation needs exactly one orphan value")
        nodes = as_points(nodes, "nodes")
        p = self.params
        out = np.empty(nodes.shape[0])
        for start in range(0, nodes.shape[0], block):
            chunk = nodes[start : start + block]
            k12 = cross_covariance(self.known, chunk, p)
            v = solve_triangular(self.chol, k12, lower=True)
            mean = p.mu + v.T @ self.whitened_resid
            var = np.maximum(p.total_variance - np.einsum("ij,ij->j", v, v), VARIANCE_FLOOR)
            out[start : start + block] = -0.5 * (
                LOG_2PI + np.log(var) + (self.y_star[0] - mean) ** 2 / var
            )
        return out


def conditional_orphan_logdensity(y_star, x_star, data: SpatialDataset, params: ModelParams) -> float:
    """Log density of orphan values ``y_star`` placed at ``x_star`` given the located data."""
    return OrphanLikelihood(data, params, orphan_values=y_star).logdensity(x_star)


def gls_mean(chol: np.ndarray, y: np.ndarray) -> float:
    """Generalized-least-squares estimate of a constant mean."""
    ones = np.ones_like(y)
    w = cho_solve((chol, True), ones)
    return float(w @ y / (w @ ones))
