"""Empirical-likelihood calibration for integrating probability and
non-probability samples with full-population auxiliary covariates."""

from .data import (EstimateWithSE, FinitePopulation, NonProbabilitySample,
                   ProbabilitySample, SamplingDesign, population_mean,
                   validate_sample_against_population)
from .density import OutcomeDensityFit, fit_outcome_density, smoothed_propensity, \
    smoothed_propensity_population_mean
from .el import (CalibrationSystem, CandidateSet, ELEstimate, ELInfeasibleError,
                 ELSolution, el_dual_solve, estimate_el0, estimate_elk, estimate_mel)
from .propensity import (FittedPropensity, PropensityModelSpec,
                         parse_propensity_formula, predict_pi,
                         solve_candidate_propensity)
from .variance import build_stacked_system, sandwich_variance, theta_variance, \
    wald_interval
from ._newton import NumericalError

__version__ = "0.1.0"
