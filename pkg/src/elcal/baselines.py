"""Design-based and propensity-weighting comparison estimators.

All weighted estimators use the Hajek (ratio) form sum(w y) / sum(w), so they
are invariant to rescaling the weights by a positive constant.  The logistic
and pseudo-likelihood fits use damped Newton from zero with separation
detection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ._newton import NumericalError, newton_maximize
from .data import FinitePopulation, NonProbabilitySample, ProbabilitySample

__all__ = [
    "WeightedEstimate",
    "estimate_ht",
    "estimate_greg",
    "estimate_rdw",
    "estimate_clw",
    "estimate_alp",
    "estimate_fdw",
    "estimate_alp_s",
]

LOGISTIC_TOL = 1e-8
SEPARATION_NORM = 30.0


@dataclass(frozen=True)
class WeightedEstimate:
    """Per-unit weights on the non-probability sample and their Hajek mean."""

    weights: np.ndarray
    estimate: float
    method: str
    score_norm: float = 0.0
    converged: bool = True


def _hajek(weights: np.ndarray, y: np.ndarray) -> float:
    return float(np.sum(weights * y) / np.sum(weights))


def estimate_ht(a: ProbabilitySample) -> float:
    """Probability-sample-only estimator: Hajek mean with design weights.

    Under SRSWOR the weights are equal and this is the plain sample mean.
    """
    if a.size == 0:
        raise ValueError("empty probability sample")
    d = a.design_weights()
    return _hajek(d, a.outcomes)


def estimate_greg(pop: FinitePopulation, a: ProbabilitySample,
                  add_intercept: bool = True) -> float:
    """Generalized regression estimator: population mean of fitted values.

    The regression coefficient is the design-weighted least-squares solution
    on the probability sample; an intercept column is prepended by default.
    """
    x_a = pop.covariates[a.indices]
    x_all = pop.covariates
    if add_intercept:
        x_a = np.column_stack([np.ones(a.size), x_a])
        x_all = np.column_stack([np.ones(pop.size), x_all])
    d = a.design_weights()
    gram = (x_a * d[:, None]).T @ x_a
    rhs = (x_a * d[:, None]).T @ a.outcomes
    if np.linalg.matrix_rank(gram) < gram.shape[0]:
        raise NumericalError("rank-deficient design matrix in GREG")
    gamma = np.linalg.solve(gram, rhs)
    return float(np.mean(x_all @ gamma))


def _fit_logistic_pseudo(x_b: np.ndarray, x_a: np.ndarray, w_b: np.ndarray,
                         w_a: np.ndarray, clw_form: bool, method: str):
    """Maximize  sum_B w log pi  (or the logit itself for the CLW form)
    + sum_A w log(1 - pi)  for pi = logistic(z'phi) over (1, x').
    """
    z_b = np.column_stack([np.ones(len(x_b)), x_b])
    z_a = np.column_stack([np.ones(len(x_a)), x_a])

    def loglik(phi):
        eta_b, eta_a = z_b @ phi, z_a @ phi
        if clw_form:
            term_b = float(np.sum(w_b * eta_b))
        else:
            term_b = float(np.sum(w_b * (eta_b - np.logaddexp(0.0, eta_b))))
        return term_b + float(np.sum(w_a * (-np.logaddexp(0.0, eta_a))))

    def score(phi):
        pi_a = expit(z_a @ phi)
        if clw_form:
            grad_b = z_b.T @ w_b
        else:
            grad_b = z_b.T @ (w_b * (1.0 - expit(z_b @ phi)))
        return grad_b - z_a.T @ (w_a * pi_a)

    def hessian(phi):
        pi_a = expit(z_a @ phi)
        h = -(z_a * (w_a * pi_a * (1.0 - pi_a))[:, None]).T @ z_a
        if not clw_form:
            pi_b = expit(z_b @ phi)
            h -= (z_b * (w_b * pi_b * (1.0 - pi_b))[:, None]).T @ z_b
        return h

    res = newton_maximize(score, hessian, np.zeros(z_b.shape[1]),
                          tol=LOGISTIC_TOL, objective=loglik)
    if not res.converged:
        if np.linalg.norm(res.x) > SEPARATION_NORM:
            raise NumericalError(f"{method}: separation in the logistic fit")
        raise NumericalError(
            f"{method}: logistic fit did not converge (score norm {res.residual_norm:.3g})")
    return res


def estimate_rdw(pop: FinitePopulation, a: ProbabilitySample,
                 b: NonProbabilitySample) -> WeightedEstimate:
    """Rescaled design-weight estimator.

    The selected units enter the logistic pseudo-likelihood with weight one,
    the probability sample with design weights rescaled by (N_hat - n_B)/N_hat
    where N_hat estimates the population size; weights are inverse fitted
    probabilities.
    """
    d = a.design_weights()
    n_hat = float(np.sum(d))
    w_a = d * (n_hat - b.size) / n_hat
    if np.any(w_a <= 0.0):
        raise NumericalError("RDW: nonpositive rescaled weights (n_B >= N_hat)")
    res = _fit_logistic_pseudo(pop.covariates[b.indices], pop.covariates[a.indices],
                               np.ones(b.size), w_a, clw_form=False, method="RDW")
    z_b = np.column_stack([np.ones(b.size), pop.covariates[b.indices]])
    weights = 1.0 / expit(z_b @ res.x)
    return WeightedEstimate(weights=weights, estimate=_hajek(weights, b.outcomes),
                            method="RDW", score_norm=res.residual_norm)


def estimate_clw(pop: FinitePopulation, a: ProbabilitySample,
                 b: NonProbabilitySample) -> WeightedEstimate:
    """Pseudo-likelihood estimator with the selected units contributing their logits."""
    res = _fit_logistic_pseudo(pop.covariates[b.indices], pop.covariates[a.indices],
                               np.ones(b.size), a.design_weights(),
                               clw_form=True, method="CLW")
    z_b = np.column_stack([np.ones(b.size), pop.covariates[b.indices]])
    weights = 1.0 / expit(z_b @ res.x)
    return WeightedEstimate(weights=weights, estimate=_hajek(weights, b.outcomes),
                            method="CLW", score_norm=res.residual_norm)


def _fit_alp(pop, a, b, scale_a: float, method: str):
    return _fit_logistic_pseudo(pop.covariates[b.indices], pop.covariates[a.indices],
                                np.ones(b.size), scale_a * a.design_weights(),
                                clw_form=False, method=method)


def estimate_alp(pop: FinitePopulation, a: ProbabilitySample,
                 b: NonProbabilitySample) -> WeightedEstimate:
    """Adjusted logistic propensity weighting: a logistic model for the odds
    of selection, weights (1 - p) / p."""
    res = _fit_alp(pop, a, b, 1.0, "ALP")
    z_b = np.column_stack([np.ones(b.size), pop.covariates[b.indices]])
    p = expit(z_b @ res.x)
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        raise NumericalError("ALP: fitted odds probabilities left (0, 1)")
    weights = (1.0 - p) / p
    return WeightedEstimate(weights=weights, estimate=_hajek(weights, b.outcomes),
                            method="ALP", score_norm=res.residual_norm)


def estimate_fdw(pop: FinitePopulation, a: ProbabilitySample,
                 b: NonProbabilitySample) -> WeightedEstimate:
    """Full design weight variant of ALP: weights 1 / p (= ALP weights + 1)."""
    res = _fit_alp(pop, a, b, 1.0, "FDW")
    z_b = np.column_stack([np.ones(b.size), pop.covariates[b.indices]])
    weights = 1.0 / expit(z_b @ res.x)
    return WeightedEstimate(weights=weights, estimate=_hajek(weights, b.outcomes),
                            method="FDW", score_norm=res.residual_norm)


def estimate_alp_s(pop: FinitePopulation, a: ProbabilitySample,
                   b: NonProbabilitySample) -> WeightedEstimate:
    """Scaled ALP: design weights scaled so both pseudo-samples have equal mass.

    The fitted slope coefficients give weights proportional to the inverse
    selection odds, exp(-x' phi_1); the intercept is dropped, which the Hajek
    ratio makes immaterial.
    """
    lam = b.size / float(np.sum(a.design_weights()))
    res = _fit_alp(pop, a, b, lam, "ALP_s")
    weights = np.exp(-pop.covariates[b.indices] @ res.x[1:])
    return WeightedEstimate(weights=weights, estimate=_hajek(weights, b.outcomes),
                            method="ALP_s", score_norm=res.residual_norm)
