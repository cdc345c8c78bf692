"""Bayesian inference: priors, MH engines and diagnostics."""
from .diagnostics import dic, ess, posterior_summary, predictive_bands, r0
from .mcmc import (
    SCHEMES,
    ChainOutput,
    ChainSettings,
    cn_update,
    loglik_variance,
    mh_kernel,
    run_chain,
)
from .priors import (
    GammaPrior,
    LogNormalPrior,
    ParameterSpace,
    PriorSpec,
    UniformPrior,
    parse_prior,
)

__all__ = [
    "SCHEMES",
    "ChainOutput",
    "ChainSettings",
    "cn_update",
    "loglik_variance",
    "mh_kernel",
    "run_chain",
    "dic",
    "ess",
    "posterior_summary",
    "predictive_bands",
    "r0",
    "GammaPrior",
    "LogNormalPrior",
    "ParameterSpace",
    "PriorSpec",
    "UniformPrior",
    "parse_prior",
]
