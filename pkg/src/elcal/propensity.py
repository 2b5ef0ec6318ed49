"""Candidate logistic selection models and their estimating-equation solver.

A candidate model gives the probability that a population unit enters the
non-probability sample as logistic(phi' w), where the predictor vector w is an
intercept followed by declared covariate columns and optionally the outcome y.
Coefficients are estimated from the moment conditions

    sum_{i=1..N} { delta_i / pi(x_i, y_i; phi) - 1 } z_i = 0,

with instruments z_i that must be observable for every population unit, hence
functions of x only.  For units outside the sample the summand is -z_i, so the
outcome is only needed on the selected units.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import root as scipy_root
from scipy.special import expit

from ._newton import NumericalError, newton_root
from .data import FinitePopulation, NonProbabilitySample

__all__ = [
    "PropensityModelSpec",
    "FittedPropensity",
    "BoundaryError",
    "parse_propensity_formula",
    "solve_candidate_propensity",
    "predict_pi",
    "estimating_function",
]

PI_CLAMP = 1e-10


class BoundaryError(NumericalError):
    """The estimating equation pushes all fitted probabilities to 1."""


def _validate_terms(terms, n_covariates, allow_outcome):
    for t in terms:
        if t == "1" or (allow_outcome and t == "y"):
            continue
        if t.startswith("x") and t[1:].isdigit() and 1 <= int(t[1:]) <= n_covariates:
            continue
        raise ValueError(f"unknown term {t!r} (have x1..x{n_covariates}"
                         + (", y" if allow_outcome else "") + ")")


@dataclass(frozen=True)
class PropensityModelSpec:
    """A candidate selection model: predictor terms and instrument terms.

    Terms are strings: "1" (intercept), "x<j>" (covariate column j, 1-based)
    or "y" (outcome, predictors only).  The instrument vector defaults to the
    intercept plus all covariates and must have the same dimension as padding
    the predictors, so the estimating system is square.
    """

    predictors: tuple[str, ...]
    instruments: tuple[str, ...]
    label: str = ""

    def __post_init__(self):
        if not self.predictors or self.predictors[0] != "1":
            raise ValueError("predictors must start with the intercept term '1'")
        if "y" in self.instruments:
            raise ValueError("instruments must be functions of x only, never y")
        if len(self.instruments) != len(self.predictors):
            raise ValueError(
                f"instrument dimension {len(self.instruments)} != "
                f"predictor dimension {len(self.predictors)}: system must be square")

    @property
    def uses_outcome(self) -> bool:
        return "y" in self.predictors

    def validate_for(self, n_covariates: int) -> None:
        _validate_terms(self.predictors, n_covariates, allow_outcome=True)
        _validate_terms(self.instruments, n_covariates, allow_outcome=False)


def parse_propensity_formula(formula: str, n_covariates: int,
                             instruments: list[str] | None = None) -> PropensityModelSpec:
    """Parse a model string such as ``"logit ~ 1 + x1 + y"``.

    The left-hand side must be ``logit``; right-hand terms are separated by
    ``+``.  When ``instruments`` is None the default intercept-plus-all-
    covariates vector is used.
    """
    lhs, _, rhs = formula.partition("~")
    if lhs.strip() != "logit" or not rhs.strip():
        raise ValueError(f"model formula must look like 'logit ~ 1 + x1 + y', got {formula!r}")
    terms = tuple(t.strip() for t in rhs.split("+"))
    if terms[0] != "1":
        terms = ("1",) + terms
    if instruments is None:
        instr = ("1",) + tuple(f"x{j + 1}" for j in range(n_covariates))
    else:
        instr = tuple(instruments)
    spec = PropensityModelSpec(predictors=terms, instruments=instr,
                               label=formula.strip())
    spec.validate_for(n_covariates)
    return spec


@dataclass(frozen=True)
class FittedPropensity:
    spec: PropensityModelSpec
    phi_hat: np.ndarray
    converged: bool
    residual_norm: float
    iterations: int


def design_matrix(terms, x: np.ndarray, y: np.ndarray | None = None) -> np.ndarray:
    """Stack the requested terms into a design matrix for rows of (x, y)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    cols = []
    for t in terms:
        if t == "1":
            cols.append(np.ones(x.shape[0]))
        elif t == "y":
            if y is None:
                raise ValueError("term 'y' requested but no outcomes supplied")
            cols.append(np.asarray(y, dtype=float))
        else:
            cols.append(x[:, int(t[1:]) - 1])
    return np.column_stack(cols)


def predict_pi(fit: FittedPropensity, x, y=None):
    """Fitted selection probability logistic(phi' w) at covariates x, outcome y."""
    w = design_matrix(fit.spec.predictors, x, None if y is None else np.atleast_1d(y))
    if w.shape[1] != fit.phi_hat.size:
        raise ValueError("dimension mismatch between fit and inputs")
    out = expit(w @ fit.phi_hat)
    return float(out[0]) if out.size == 1 else out


def estimating_function(phi, z_total: np.ndarray, z_b: np.ndarray, w_b: np.ndarray) -> np.ndarray:
    """Moment conditions sum_B z_i / pi_i(phi) - sum_N z_i at coefficients phi."""
    pi = np.clip(expit(w_b @ phi), PI_CLAMP, 1.0 - PI_CLAMP)
    return z_b.T @ (1.0 / pi) - z_total


def solve_candidate_propensity(pop: FinitePopulation, b: NonProbabilitySample,
                               spec: PropensityModelSpec, tol: float = 1e-8,
                               max_iter: int = 100) -> FittedPropensity:
    """Fit one candidate model by Newton iteration on the moment conditions.

    Raises NumericalError on a singular Jacobian and BoundaryError when the
    fitted probabilities saturate at one for every selected unit (no finite
    root); an exhausted iteration budget returns ``converged=False``.
    """
    spec.validate_for(pop.n_covariates)
    x_b = pop.covariates[b.indices]
    w_b = design_matrix(spec.predictors, x_b, b.outcomes)
    z_b = design_matrix(spec.instruments, x_b)
    z_total = design_matrix(spec.instruments, pop.covariates).sum(axis=0)

    def fun(phi):
        return estimating_function(phi, z_total, z_b, w_b)

    def jac(phi):
        pi = np.clip(expit(w_b @ phi), PI_CLAMP, 1.0 - PI_CLAMP)
        # d(1/pi)/d eta = -(1 - pi) / pi
        return -(z_b * ((1.0 - pi) / pi)[:, None]).T @ w_b

    res = newton_root(fun, jac, np.zeros(len(spec.predictors)), tol=tol, max_iter=max_iter)
    if not res.converged:
        # deterministic retries: first from the intercept-only root (starts at
        # the observed selection fraction instead of 1/2), then a dogleg
        # trust-region search polished by Newton.  Misspecified outcome-
        # dependent candidates occasionally have no finite root at all; those
        # fits are returned with converged=False.
        warm = np.zeros(len(spec.predictors))
        warm[0] = np.log(b.size / (pop.size - b.size)) if b.size < pop.size else 0.0
        for start in (warm, None, "hybr-warm"):
            if start is None or isinstance(start, str):
                x0 = warm if isinstance(start, str) else np.zeros(len(spec.predictors))
                sol = scipy_root(fun, x0, jac=jac, method="hybr")
                retry = newton_root(fun, jac, sol.x, tol=tol, max_iter=max_iter)
            else:
                retry = newton_root(fun, jac, start, tol=tol, max_iter=max_iter)
            if retry.converged:
                res = retry
                break
    pi_b = expit(w_b @ res.x)
    if np.min(pi_b) >= 1.0 - 1e-7:
        raise BoundaryError(
            "boundary solution: fitted selection probabilities reach 1 for all "
            "selected units; the moment conditions have no finite root")
    return FittedPropensity(spec=spec, phi_hat=res.x, converged=res.converged,
                            residual_norm=res.residual_norm, iterations=res.iterations)
