"""Predictive inference for the missing locations of geostatistical measurements.

Given measurements at known locations plus "orphan" measurements whose
locations were lost, compute the predictive distribution of the missing
locations under a Gaussian-process measurement model and a location prior:
by grid quadrature for one missing location, or by a mixture-proposal
Metropolis-Hastings sampler for several.
"""
from .errors import (
    CapabilityError,
    InputError,
    InvGeoError,
    NumericalError,
    PackingInfeasibleError,
    SingularityWarning,
)
from .fit import FitResult, fit_mle
from .mcmc import McmcConfig, McmcRun, autocorrelogram, mh_step, proposal_logdensity, run_chain
from .model import (
    Family,
    ModelParams,
    Rect,
    SpatialDataset,
    conditional_orphan_logdensity,
    correlation,
    covariance_matrix,
    mvn_logdensity,
)
from .pointprocess import (
    InhibitionPrior,
    SsiConfig,
    sample_intensity,
    sample_ssi,
    sample_uniform,
    ssi_conditional_logdensity,
)
from .priors import (
    IntensityPrior,
    KdePrior,
    UniformRect,
    intensity_from_covariates,
    plugin_bandwidth,
    prior_logdensity,
)
from .quadrature import Grid, PredictiveField, hdr, predict_single, summarize, total_variation
from .sim import simulate_measurements

__version__ = "0.1.0"
