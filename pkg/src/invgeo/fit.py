"""Maximum-likelihood fitting of the covariance parameters from located data."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.optimize import minimize

from .errors import InputError
from .model import LOG_2PI, Family, ModelParams, Rect, as_points, covariance_matrix, gls_mean

log = logging.getLogger(__name__)

PENALTY = 1e300
PHI_START_FRACTIONS = (0.1, 0.5, 1.0)


@dataclass
class StartReport:
    phi0: float
    loglik: float
    converged: bool
    n_evals: int
    message: str


@dataclass
class FitResult:
    params: ModelParams
    loglik: float
    converged: bool
    n_evals: int
    starts: list = field(default_factory=list)


def profile_loglik(locations, values, params: ModelParams):
    """Gaussian log-likelihood with the mean replaced by its GLS estimate.

    Returns ``(loglik, mu_hat)``; raises ``np.linalg.LinAlgError`` when the
    covariance is not positive definite.
    """
    cov = covariance_matrix(locations, params)
    chol = np.linalg.cholesky(cov)
    mu = gls_mean(chol, values)
    z = solve_triangular(chol, values - mu, lower=True)
    ll = -0.5 * values.size * LOG_2PI - np.sum(np.log(np.diag(chol))) - 0.5 * z @ z
    return float(ll), mu


def fit_mle(
    locations,
    values,
    family=Family.EXPONENTIAL,
    init: ModelParams | None = None,
    fix_kappa: float | None = None,
    phi_starts=None,
    max_evals: int = 2000,
    ftol: float = 1e-8,
) -> FitResult:
    """Fit ``(mu, sigma2, tau2, phi, kappa)`` by maximum likelihood.

    Nelder-Mead on ``log`` of the covariance parameters with ``mu`` profiled
    out by generalized least squares. Runs one search per starting value of
    ``phi`` (default: 0.1, 0.5 and 1 times a quarter of the bounding-box
    diameter) and keeps the best.

    The default initial variances are derived from the sample variance, so
    rescaling the data rescales the fit exactly.
    """
    pts = as_points(locations)
    y = np.asarray(values, dtype=float).reshape(-1)
    if pts.shape[0] != y.size:
        raise InputError(f"{pts.shape[0]} locations but {y.size} values")
    if y.size < 5:
        raise InputError(f"maximum likelihood needs at least 5 located measurements, got {y.size}")
    family = Family.parse(family)
    if fix_kappa is not None and not fix_kappa > 0:
        raise InputError(f"fix_kappa must be > 0, got {fix_kappa}")

    var_y = float(np.var(y, ddof=1))
    if not var_y > 0:
        raise InputError("measurements are constant; covariance parameters are not identifiable")
    diameter = Rect.from_points(pts).diameter
    if init is None:
        init = ModelParams(
            mu=float(np.mean(y)),
            sigma2=0.5 * var_y,
            tau2=0.5 * var_y,
            phi=max(diameter, 1e-12) / 4,
            kappa=fix_kappa if fix_kappa is not None else 1.0,
            family=family,
        )
    if phi_starts is None:
        base = max(diameter, 1e-12) / 4
        phi_starts = [f * base for f in PHI_START_FRACTIONS]

    fit_kappa = family is Family.MATERN and fix_kappa is None
    kappa_fixed = fix_kappa if fix_kappa is not None else init.kappa

    def unpack(theta):
        kappa = math.exp(theta[3]) if fit_kappa else kappa_fixed
        return ModelParams(
            mu=0.0,
            sigma2=math.exp(theta[0]),
            tau2=math.exp(theta[1]),
            phi=math.exp(theta[2]),
            kappa=kappa,
            family=family,
        )

    def objective(theta):
        if not np.all(np.isfinite(theta)) or np.any(np.abs(theta) > 700):
            return PENALTY
        try:
            ll, _ = profile_loglik(pts, y, unpack(theta))
        except (np.linalg.LinAlgError, ValueError):
            return PENALTY
        return -ll if math.isfinite(ll) else PENALTY

    best = None
    reports = []
    total_evals = 0
    for phi0 in phi_starts:
        x0 = [math.log(max(init.sigma2, 1e-12 * var_y)), math.log(max(init.tau2, 1e-12 * var_y)), math.log(phi0)]
        if fit_kappa:
            x0.append(math.log(init.kappa))
        x0 = np.array(x0)
        simplex = np.vstack([x0, x0 + 0.5 * np.eye(x0.size)])
        f0 = objective(x0)
        fatol = ftol * max(1.0, abs(f0)) if f0 < PENALTY else ftol
        res = minimize(
            objective,
            x0,
            method="Nelder-Mead",
            options={
                "initial_simplex": simplex,
                "maxfev": max_evals,
                "xatol": 1e-7,
                "fatol": fatol,
            },
        )
        total_evals += res.nfev
        ll = -float(res.fun)
        reports.append(StartReport(phi0, ll, bool(res.success), int(res.nfev), str(res.message)))
        log.debug("start phi0=%g: loglik=%g converged=%s", phi0, ll, res.success)
        if best is None or res.fun < best.fun:
            best = res

    if best.fun >= PENALTY:
        raise InputError("likelihood could not be evaluated at any starting value")
    fitted = unpack(best.x)
    ll, mu = profile_loglik(pts, y, fitted)
    return FitResult(
        params=fitted.replace(mu=mu),
        loglik=ll,
        converged=bool(best.success),
        n_evals=total_evals,
        starts=reports,
    )
