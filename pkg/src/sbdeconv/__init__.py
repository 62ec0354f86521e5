"""Scalable Bayesian semi-blind deconvolution on extended cyclic lattices."""

from .chain import ChainOutput, SamplerConfig, init_state_from_prior, run_chain
from .diagnostics import ess, msjd, rmse
from .fourier import (
    BccbMatrix,
    CirculantMatrix,
    ConvolutionOperators,
    build_convolution_ops,
    dft,
    dft2,
    idft,
    idft2,
)
from .gauss import (
    FourierGaussian,
    HardConstraint,
    RngStreams,
    condition_by_kriging,
    conditional_params,
    constrained_logdensity,
    sample_fourier_gaussian,
)
from .gibbs import gibbs_sweep
from .hmc import HmcConfig, grad_potential, hmc_update, leapfrog, potential
from .model import (
    CorrelationSpec,
    HyperParams,
    LatticeSpec,
    ModelState,
    SbdModel,
    build_correlation,
    log_posterior_unnorm,
)

__version__ = "0.1.0"

__all__ = [
    "BccbMatrix", "ChainOutput", "CirculantMatrix", "ConvolutionOperators",
    "CorrelationSpec", "FourierGaussian", "HardConstraint", "HmcConfig",
    "HyperParams", "LatticeSpec", "ModelState", "RngStreams", "SamplerConfig",
    "SbdModel", "build_convolution_ops", "build_correlation",
    "condition_by_kriging", "conditional_params", "constrained_logdensity",
    "dft", "dft2", "ess", "gibbs_sweep", "grad_potential", "hmc_update",
    "idft", "idft2", "init_state_from_prior", "leapfrog",
    "log_posterior_unnorm", "msjd", "potential", "rmse", "run_chain",
    "sample_fourier_gaussian",
]
