"""Conditional outcome-density fits and propensity smoothing.

The density f(y | x; beta) is fitted from the probability sample by maximizing
the design-weighted pseudo log-likelihood  sum_{i in A} (1/pi_i) log f(y_i | x_i).
Two families are supported: normal-linear (closed-form weighted least squares)
and multinomial-linear (per-category linear scores over (1, x') with the first
category as reference, fitted by Newton ascent).

Smoothing integrates a candidate selection model over the fitted outcome
distribution:  pi_tilde(x) = E{ pi(X, Y; phi) | X = x }.  For the normal
family this is Gauss-Hermite quadrature of a logistic integrand; for the
multinomial family it is an exact finite sum over categories.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy.special import expit

from ._newton import NumericalError, newton_maximize
from .data import FinitePopulation, ProbabilitySample
from .propensity import FittedPropensity, design_matrix

__all__ = [
    "OutcomeDensityFit",
    "fit_outcome_density",
    "smoothed_propensity",
    "smoothed_propensity_population_mean",
    "DEFAULT_GH_NODES",
]

DEFAULT_GH_NODES = 40


@lru_cache(maxsize=8)
def _gh_rule(n_nodes: int):
    if n_nodes < 2:
        raise ValueError("quadrature needs at least 2 nodes")
    nodes, weights = np.polynomial.hermite.hermgauss(n_nodes)
    return nodes, weights / np.sqrt(np.pi)


@dataclass(frozen=True)
class OutcomeDensityFit:
    """A fitted conditional density f(y | x; beta).

    normal family: ``coef`` are the regression coefficients over (1, x') and
    ``sigma2`` the error variance.  multinomial family: ``scores`` is a
    J x (p + 1) matrix of linear score coefficients with the reference (first)
    row pinned to zero, and ``categories`` the ordered category values.
    """

    family: str
    coef: np.ndarray | None = None
    sigma2: float | None = None
    scores: np.ndarray | None = None
    categories: np.ndarray | None = None
    converged: bool = True
    score_norm: float = 0.0
    degenerate: bool = False

    # -- parameter vector packing (used by the linearized variance system) --

    def beta_vector(self) -> np.ndarray:
        if self.family == "normal":
            return np.append(self.coef, self.sigma2)
        return self.scores[1:].ravel()

    def with_beta(self, beta: np.ndarray) -> "OutcomeDensityFit":
        beta = np.asarray(beta, dtype=float)
        if self.family == "normal":
            return replace(self, coef=beta[:-1], sigma2=float(beta[-1]))
        scores = np.vstack([np.zeros(self.scores.shape[1]),
                            beta.reshape(self.scores.shape[0] - 1, self.scores.shape[1])])
        return replace(self, scores=scores)

    # -- per-unit pseudo-score rows, d log f / d beta ----------------------

    def score_rows(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        z = np.column_stack([np.ones(len(y)), np.atleast_2d(x)])
        if self.family == "normal":
            resid = y - z @ self.coef
            s2 = self.sigma2
            coef_part = z * (resid / s2)[:, None]
            var_part = -0.5 / s2 + resid**2 / (2.0 * s2**2)
            return np.column_stack([coef_part, var_part])
        probs = self.category_probs(x)
        onehot = (y[:, None] == self.categories[None, :]).astype(float)
        diff = onehot[:, 1:] - probs[:, 1:]
        # column order matches beta_vector: category-major, then (1, x') terms
        return (diff[:, :, None] * z[:, None, :]).reshape(len(y), -1)

    def conditional_mean(self, x: np.ndarray) -> np.ndarray:
        z = np.column_stack([np.ones(np.atleast_2d(x).shape[0]), np.atleast_2d(x)])
        if self.family == "normal":
            return z @ self.coef
        return self.category_probs(x) @ self.categories

    def category_probs(self, x: np.ndarray) -> np.ndarray:
        if self.family != "multinomial":
            raise ValueError("category probabilities only exist for the multinomial family")
        z = np.column_stack([np.ones(np.atleast_2d(x).shape[0]), np.atleast_2d(x)])
        eta = z @ self.scores.T
        eta -= eta.max(axis=1, keepdims=True)
        w = np.exp(eta)
        return w / w.sum(axis=1, keepdims=True)


def _fit_normal(x: np.ndarray, y: np.ndarray, weights: np.ndarray) -> OutcomeDensityFit:
    z = np.column_stack([np.ones(len(y)), x])
    sw = np.sqrt(weights)
    coef, _, rank, _ = np.linalg.lstsq(z * sw[:, None], y * sw, rcond=None)
    if rank < z.shape[1]:
        raise NumericalError("rank-deficient design matrix in the density fit")
    resid = y - z @ coef
    sigma2 = float(np.sum(weights * resid**2) / np.sum(weights))
    degenerate = sigma2 <= 1e-12 * (1.0 + float(np.mean(y**2)))
    # pseudo-score max-norm at the solution (exact zero up to rounding)
    if not degenerate:
        score = np.concatenate([z.T @ (weights * resid) / sigma2,
                                [np.sum(weights * (-0.5 / sigma2 + resid**2 / (2 * sigma2**2)))]])
        norm = float(np.max(np.abs(score)))
    else:
        norm = 0.0
    return OutcomeDensityFit(family="normal", coef=coef, sigma2=sigma2,
                             converged=True, score_norm=norm, degenerate=degenerate)


def _fit_multinomial(x: np.ndarray, y: np.ndarray, weights: np.ndarray,
                     tol: float = 1e-8, max_iter: int = 100) -> OutcomeDensityFit:
    categories = np.unique(y)
    n_cat = categories.size
    if n_cat < 2:
        raise NumericalError("multinomial fit needs at least two observed categories")
    z = np.column_stack([np.ones(len(y)), x])
    n_par = z.shape[1]
    onehot = (y[:, None] == categories[None, :]).astype(float)
    template = OutcomeDensityFit(family="multinomial",
                                 scores=np.zeros((n_cat, n_par)),
                                 categories=categories)

    def probs(beta):
        return template.with_beta(beta).category_probs(x)

    def loglik(beta):
        p = probs(beta)
        return float(np.sum(weights * np.log(np.sum(onehot * p, axis=1))))

    def score(beta):
        diff = onehot[:, 1:] - probs(beta)[:, 1:]
        return ((weights[:, None] * diff).T @ z).ravel()

    def hessian(beta):
        p = probs(beta)
        dim = (n_cat - 1) * n_par
        h = np.zeros((dim, dim))
        for j in range(1, n_cat):
            for l in range(j, n_cat):
                w = weights * p[:, j] * ((j == l) - p[:, l])
                block = -(z * w[:, None]).T @ z
                h[(j - 1) * n_par:j * n_par, (l - 1) * n_par:l * n_par] = block
                if l != j:
                    h[(l - 1) * n_par:l * n_par, (j - 1) * n_par:j * n_par] = block
        return h

    res = newton_maximize(score, hessian, np.zeros((n_cat - 1) * n_par),
                          tol=tol, max_iter=max_iter, objective=loglik)
    if not res.converged:
        raise NumericalError(
            f"multinomial density fit did not converge (score norm {res.residual_norm:.3g})")
    fit = template.with_beta(res.x)
    return replace(fit, converged=True, score_norm=res.residual_norm)


def fit_outcome_density(pop: FinitePopulation, a: ProbabilitySample,
                        family: str) -> OutcomeDensityFit:
    """Fit f(y | x; beta) from the probability sample by weighted pseudo-MLE."""
    x = pop.covariates[a.indices]
    weights = a.design_weights()
    if a.size <= x.shape[1] + 1:
        raise NumericalError("probability sample too small for the density fit")
    if family == "normal":
        return _fit_normal(x, a.outcomes, weights)
    if family == "multinomial":
        return _fit_multinomial(x, a.outcomes, weights)
    raise ValueError(f"unknown density family {family!r}")


def _split_y_coefficient(prop: FittedPropensity, x: np.ndarray):
    """Return (eta0, c) with logit pi = eta0(x) + c * y for rows of x."""
    terms = prop.spec.predictors
    phi = prop.phi_hat
    x = np.atleast_2d(np.asarray(x, dtype=float))
    keep = [t for t in terms if t != "y"]
    coefs = np.array([phi[i] for i, t in enumerate(terms) if t != "y"])
    eta0 = design_matrix(keep, x) @ coefs if keep else np.zeros(x.shape[0])
    c = sum(phi[i] for i, t in enumerate(terms) if t == "y")
    return eta0, c


def smoothed_propensity(fit: OutcomeDensityFit, prop: FittedPropensity, x,
                        n_nodes: int = DEFAULT_GH_NODES) -> float | np.ndarray:
    """E{ pi(X, Y; phi_hat) | X = x } under the fitted outcome density.

    Vectorized over rows of ``x``; returns a scalar for a single row.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    eta0, c = _split_y_coefficient(prop, x)
    if c == 0.0:
        out = expit(eta0)
    elif fit.family == "normal":
        nodes, weights = _gh_rule(n_nodes)
        mu = fit.conditional_mean(x)
        shift = np.sqrt(2.0 * fit.sigma2) * c * nodes
        out = expit((eta0 + c * mu)[:, None] + shift[None, :]) @ weights
    else:
        probs = fit.category_probs(x)
        out = np.sum(probs * expit(eta0[:, None] + c * fit.categories[None, :]), axis=1)
    return float(out[0]) if out.size == 1 else out


def smoothed_propensity_population_mean(fit: OutcomeDensityFit, prop: FittedPropensity,
                                        pop: FinitePopulation,
                                        n_nodes: int = DEFAULT_GH_NODES) -> float:
    """Population mean of the smoothed propensity, the calibration target."""
    values = smoothed_propensity(fit, prop, pop.covariates, n_nodes=n_nodes)
    return float(np.mean(values))
