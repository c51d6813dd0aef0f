"""Jackknife bias-reduced estimation of smooth functionals of covariance matrices."""

from covfest.bootstrap import ChainConfig, MCEstimate, b_power_estimate, bootstrap_debiased, simulate_chain
from covfest.covariance import (
    CovarianceMatrix,
    SampleBatch,
    SpikedModel,
    effective_rank,
    operator_norm,
    sample_covariance,
    sample_gaussian,
    spiked_covariance,
    spiked_kl,
)
from covfest.diagnostics import (
    RiskReport,
    empirical_lp,
    empirical_orlicz,
    ks_to_standard_normal,
    rate_slope,
    w2_to_standard_normal,
)
from covfest.errors import ConfigError, CovfestError, DegenerateCovariance, DomainError, InvalidInput, PlanError
from covfest.functionals import (
    BilinearForm,
    LogDet,
    Polynomial,
    SmoothedStep,
    SpectralLinearForm,
    TracePower,
    evaluate,
    frechet_derivative,
    sigma_f,
    taylor_remainder,
)
from covfest.jackknife import JackknifePlan, build_plan, estimate_t1, estimate_t2, plugin_estimate, u_statistic

__version__ = "0.1.0"
