"""Metropolis-Hastings sampler for several missing locations.

Each missing location is proposed independently from a two-component
mixture: with probability ``p`` an isotropic Gaussian random walk of scale
``h1``, otherwise an isotropic Gaussian of scale ``h2`` centred on a
uniformly chosen known location. The whole vector is accepted or rejected
jointly.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InputError, NumericalError
from .model import ModelParams, OrphanLikelihood, SpatialDataset, as_points
from .priors import LocationPrior

log = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class McmcConfig:
    """Sampler settings. ``h1``/``h2`` of ``None`` are filled from the region
    diameter (10% and 4%) by :func:`run_chain`."""

    h1: float | None = None
    h2: float | None = None
    p: float = 0.5
    iterations: int = 110_000
    burn_in: int = 10_000
    thin: int = 10
    seed: int | None = None
    init: np.ndarray | None = None

    def __post_init__(self):
        for name in ("h1", "h2"):
            v = getattr(self, name)
            if v is not None and not (v > 0 and math.isfinite(v)):
                raise InputError(f"{name} must be a positive finite scale, got {v}")
        if not 0 <= self.p <= 1:
            raise InputError(f"p must lie in [0, 1], got {self.p}")
        if self.thin < 1:
            raise InputError(f"thin must be >= 1, got {self.thin}")
        if self.burn_in < 0 or self.burn_in >= self.iterations:
            raise InputError(
                f"burn_in ({self.burn_in}) must be >= 0 and below iterations ({self.iterations})"
            )
        if self.n_retained < 100:
            raise InputError(
                f"(iterations - burn_in) / thin = {self.n_retained}; at least 100 samples are required"
            )

    @property
    def n_retained(self) -> int:
        return (self.iterations - self.burn_in) // self.thin

    def with_default_scales(self, diameter: float) -> "McmcConfig":
        return replace(
            self,
            h1=self.h1 if self.h1 is not None else 0.10 * diameter,
            h2=self.h2 if self.h2 is not None else 0.04 * diameter,
        )


@dataclass
class McmcRun:
    samples: np.ndarray  # (n_retained, n_missing, 2)
    acceptance_rate: float
    config: McmcConfig
    log_targets: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def n_missing(self) -> int:
        return self.samples.shape[1]

    def coordinate_series(self, loc: int, axis: int) -> np.ndarray:
        return self.samples[:, loc, axis]


def _logsumexp_rows(a: np.ndarray) -> np.ndarray:
    m = a.max(axis=1)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        return m + np.log(np.exp(a - m[:, None]).sum(axis=1))


def _log_random_walk(to, frm, h1, p):
    if p == 0:
        return np.full(to.shape[0], -np.inf)
    d2 = np.sum((to - frm) ** 2, axis=1)
    return math.log(p) - LOG_2PI - 2 * math.log(h1) - 0.5 * d2 / h1**2


def _log_anchor(to, known, h2, p):
    if p == 1:
        return np.full(to.shape[0], -np.inf)
    diff = to[:, None, :] - known[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    return (
        math.log1p(-p)
        - math.log(known.shape[0])
        - LOG_2PI
        - 2 * math.log(h2)
        + _logsumexp_rows(-0.5 * d2 / h2**2)
    )


def proposal_logdensity(to, frm, known, h1: float, h2: float, p: float) -> float:
    """Log density ``q(to | frm)`` of the mixture proposal.

    Product over missing locations of
    ``p N(w_i; z_i, h1^2 I) + (1-p)/n_known * sum_j N(w_i; x_j, h2^2 I)``
    with bivariate Gaussian densities ``N``.
    """
    to = as_points(to, "to")
    frm = as_points(frm, "from")
    known = as_points(known, "known")
    if to.shape != frm.shape:
        raise InputError(f"shape mismatch {to.shape} vs {frm.shape}")
    if not (h1 > 0 and h2 > 0):
        raise InputError("proposal scales must be positive")
    return float(np.sum(np.logaddexp(_log_random_walk(to, frm, h1, p), _log_anchor(to, known, h2, p))))


class Target:
    """Unnormalized log predictive density of the missing locations."""

    def __init__(self, data: SpatialDataset, params: ModelParams, prior: LocationPrior):
        if data.n_orphans < 1:
            raise InputError("dataset has no orphan values to locate")
        self.prior = prior
        self.likelihood = OrphanLikelihood(data, params)

    def __call__(self, x_star) -> float:
        lp = self.prior.joint_logpdf(x_star)
        if not lp > -math.inf:
            return -math.inf
        return lp + self.likelihood.logdensity(x_star, check=False)


@dataclass
class ChainState:
    locations: np.ndarray
    log_target: float
    # log of the data-anchored mixture component at each current location
    log_anchor: np.ndarray


class MixtureKernel:
    """MH transition kernel with the random-walk / data-anchored mixture proposal."""

    def __init__(self, target: Target, known, h1: float, h2: float, p: float):
        self.target = target
        self.known = as_points(known, "known")
        if not (h1 > 0 and h2 > 0):
            raise InputError("proposal scales must be positive")
        self.h1, self.h2, self.p = float(h1), float(h2), float(p)

    def init_state(self, locations) -> ChainState:
        locations = as_points(locations, "init").copy()
        return ChainState(
            locations, self.target(locations), _log_anchor(locations, self.known, self.h2, self.p)
        )

    def propose(self, current: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        n = current.shape[0]
        walk = rng.random(n) < self.p
        centres = np.where(
            walk[:, None], current, self.known[rng.integers(self.known.shape[0], size=n)]
        )
        scales = np.where(walk, self.h1, self.h2)
        return centres + scales[:, None] * rng.standard_normal((n, 2))

    def step(self, state: ChainState, rng: np.random.Generator) -> bool:
        """Advance ``state`` in place by one MH transition; returns acceptance."""
        prop = self.propose(state.locations, rng)
        log_u = math.log(rng.random())
        lt = self.target(prop)
        if not lt > -math.inf:
            return False
        anchor_prop = _log_anchor(prop, self.known, self.h2, self.p)
        # random-walk terms depend on |prop - curr| only, so they are shared
        rw = _log_random_walk(prop, state.locations, self.h1, self.p)
        log_q_fwd = np.sum(np.logaddexp(rw, anchor_prop))
        log_q_rev = np.sum(np.logaddexp(rw, state.log_anchor))
        log_ratio = lt - state.log_target + log_q_rev - log_q_fwd
        if log_u < log_ratio:
            state.locations = prop
            state.log_target = lt
            state.log_anchor = anchor_prop
            return True
        return False


def mh_step(state: ChainState, kernel: MixtureKernel, rng: np.random.Generator) -> bool:
    return kernel.step(state, rng)


def default_init(target: Target, known, n_missing: int, h2: float, rng, rect=None, tries: int = 1000):
    """Start each missing location at a uniformly chosen known location.

    Falls back to draws around known locations, then to uniform draws on
    ``rect``, when that start has zero target density (e.g. under inhibition).
    """
    known = as_points(known, "known")
    for attempt in range(tries):
        x0 = known[rng.integers(known.shape[0], size=n_missing)].copy()
        if attempt >= tries // 3:
            x0 = x0 + h2 * rng.standard_normal(x0.shape)
        if rect is not None and attempt >= 2 * tries // 3:
            x0 = np.column_stack(
                [
                    rng.uniform(rect.xmin, rect.xmax, n_missing),
                    rng.uniform(rect.ymin, rect.ymax, n_missing),
                ]
            )
        if target(x0) > -math.inf:
            return x0
    raise NumericalError(f"no initial state with positive target density found in {tries} draws")


def run_chain(data: SpatialDataset, params: ModelParams, prior: LocationPrior, config: McmcConfig) -> McmcRun:
    """Run one chain; retains every ``thin``-th state after ``burn_in`` iterations."""
    config = config.with_default_scales(data.region.diameter)
    rng = np.random.default_rng(config.seed)
    target = Target(data, params, prior)
    kernel = MixtureKernel(target, data.known_locations, config.h1, config.h2, config.p)
    if config.init is None:
        init = default_init(target, data.known_locations, data.n_orphans, config.h2, rng, data.region)
    else:
        init = as_points(config.init, "init")
        if init.shape[0] != data.n_orphans:
            raise InputError(f"init has {init.shape[0]} locations for {data.n_orphans} orphan values")
    state = kernel.init_state(init)
    if not state.log_target > -math.inf:
        raise InputError("initial state has zero target density")

    n_keep = config.n_retained
    samples = np.empty((n_keep, data.n_orphans, 2))
    log_targets = np.empty(n_keep)
    accepted = 0
    kept = 0
    for t in range(1, config.iterations + 1):
        accepted += kernel.step(state, rng)
        if t > config.burn_in and (t - config.burn_in) % config.thin == 0 and kept < n_keep:
            samples[kept] = state.locations
            log_targets[kept] = state.log_target
            kept += 1
    rate = accepted / config.iterations
    log.info("chain finished: %d iterations, acceptance %.3f", config.iterations, rate)
    return McmcRun(samples=samples, acceptance_rate=rate, config=config, log_targets=log_targets)


def autocorrelogram(series, max_lag: int) -> np.ndarray:
    """Sample autocorrelations at lags ``1..max_lag`` (biased, lag-0 normalized)."""
    x = np.asarray(series, dtype=float).reshape(-1)
    if max_lag < 1 or x.size <= max_lag:
        raise InputError(f"series of length {x.size} too short for max_lag={max_lag}")
    x = x - x.mean()
    c0 = x @ x
    if not c0 > 0:
        raise InputError("autocorrelation undefined for a constant series")
    return np.array([x[:-k] @ x[k:] / c0 for k in range(1, max_lag + 1)])
