"""Bayesian regression for Beta fuzzy responses with an approximated Gibbs sampler."""
from .approx import B4PProposal, SNApprox, fit_b4p, fit_b4p_dataset, fit_skewnormal
from .diagnostics import PosteriorSummary, PPCReport, ess, hellinger, hpdi, ppc, rhat, summarize, tv_distance, waic
from .dists import Beta4PParams, GammaParams, SkewNormalParams, c_factor
from .errors import (ChainFailure, ConversionError, ConvergenceError, DomainError, IntegrationError,
                     ParameterError)
from .fuzznum import BetaFuzzyNumber, Interval, TrapezoidalFuzzyNumber, alpha_cut, centroid, kaufman_index, trapezoid_to_beta
from .gibbs import ChainDraws, PriorSpec, SamplerConfig, gamma_mle, run_chain, run_chains
from .model import FuzzyDataset, ModelSpec, ThetaS, ThetaY, add_intercept, simulate

__version__ = "0.1.0"
