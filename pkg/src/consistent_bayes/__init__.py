"""Consistent Bayesian inversion with push-forward density estimates."""
from .core import ForwardModel, ParameterDomain, RngStream, SampleBatch, evaluate_batch, sample_uniform
from .density import (
    Beta,
    ChiSquared,
    GaussianKDE,
    MultivariateNormal,
    MultivariateStandardNormal,
    Normal,
    Product,
    TruncatedNormal,
    Uniform,
    UniformInterval,
    fit_gkde,
)
from .errors import *  # noqa: F401,F403
from .inference import (
    Diagnostics,
    PosteriorHandle,
    build_pushforward,
    diagnostics,
    rejection_sample,
    set_posterior_probability,
)
from .metrics import ConvergenceRecord, fit_rate, posterior_l1_error, tv_distance_mc, tv_distance_quadrature
from .special import chi2_cdf, chi2_pdf, chi2_quantile

__version__ = "0.1.0"
