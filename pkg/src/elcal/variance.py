"""Linearized variance estimation for the calibrated estimators.

The point estimate solves a stacked estimating-equation system in
(beta, lambda, theta): the design-weighted density pseudo-score over the
probability sample, the calibration equations over the selected sample, and
the mean equation.  Candidate-model coefficients are held fixed: with the
selected sample an order of magnitude larger than the probability sample,
their estimation variability is negligible by comparison.

The covariance of the stacked system is assembled block-diagonally: the
probability-sample block uses the closed-form (stratified) SRSWOR variance of
a weighted total, and the selected-sample blocks use the uncentered
independent-unit form  sum h_i h_i', since the selection indicators are
independent Bernoulli draws with unknown means.  The parameter covariance is
the sandwich  I_hat^{-1} V_g (I_hat^{-1})'.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from ._newton import NumericalError
from .data import ProbabilitySample
from .el import ELEstimate

__all__ = [
    "StackedSystem",
    "build_stacked_system",
    "sandwich_variance",
    "wald_interval",
    "design_variance_total",
]

FD_REL_STEP = 1e-5


def design_variance_total(rows: np.ndarray, a: ProbabilitySample,
                          pop_strata: np.ndarray | None) -> np.ndarray:
    """Design variance of the weighted total  sum_{i in A} pi_i^{-1} rows_i.

    Closed form for (stratified) SRSWOR:  sum_h N_h^2 (1 - f_h) S_h^2 / n_h
    with S_h^2 the within-stratum sample covariance of the rows.
    """
    rows = np.atleast_2d(rows)
    if rows.shape[0] != a.size:
        rows = rows.T
    dim = rows.shape[1]
    out = np.zeros((dim, dim))
    if a.design.kind == "srswor":
        groups = [(a.design.population_size, np.arange(a.size))]
    else:
        if pop_strata is None:
            raise ValueError("stratified design variance needs population strata")
        labels = pop_strata[a.indices]
        groups = [(a.design.strata[int(h)][0], np.flatnonzero(labels == h))
                  for h in np.unique(labels)]
    for n_h_pop, members in groups:
        n_h = members.size
        if n_h < 2:
            raise NumericalError("design variance needs at least 2 units per stratum")
        sub = rows[members]
        s2 = np.cov(sub, rowvar=False, ddof=1).reshape(dim, dim)
        out += n_h_pop**2 * (1.0 - n_h / n_h_pop) / n_h * s2
    return out


@dataclass(frozen=True)
class StackedSystem:
    """The stacked estimating function at the solution, its Jacobian and variance."""

    g_value: np.ndarray
    jacobian: np.ndarray
    vg: np.ndarray
    n_beta: int
    n_constraints: int

    @property
    def dim(self) -> int:
        return self.n_beta + self.n_constraints + 1


def _target_vector(est: ELEstimate, beta: np.ndarray | None) -> np.ndarray:
    """Targets for every constraint row, re-evaluating the smoothed means at beta."""
    targets = np.array(est.system.targets, dtype=float)
    if est.candidates is not None and est.candidates.n_candidates > 0:
        prop_targets = est.candidates.targets(beta)
        for j, label in enumerate(est.system.labels):
            if label.startswith("propensity-"):
                targets[j] = prop_targets[int(label.split("-")[1]) - 1]
    return targets


def _stacked_g(est: ELEstimate, beta: np.ndarray, lam: np.ndarray,
               theta: float) -> np.ndarray:
    parts = []
    density = est.candidates.density if est.candidates is not None else None
    if density is not None:
        x_a = est.pop.covariates[est.a.indices]
        rows = density.with_beta(beta).score_rows(x_a, est.a.outcomes)
        parts.append(est.a.design_weights() @ rows)
    u = est.system.u
    centered = u - _target_vector(est, beta if density is not None else None)
    denom = 1.0 + centered @ lam
    parts.append(centered.T @ (1.0 / denom))
    parts.append([np.sum((est.b.outcomes - theta) / denom)])
    return np.concatenate([np.atleast_1d(p) for p in parts])


def build_stacked_system(est: ELEstimate) -> StackedSystem:
    """Evaluate the stacked system at the solution: value, Jacobian, design variance.

    The Jacobian is computed by central finite differences with per-parameter
    steps 1e-5 * max(1, |value|); re-evaluations of the smoothed-propensity
    targets are cached on the candidate set.
    """
    if not est.solution.converged:
        raise NumericalError("variance requested for a non-converged solution")
    density = est.candidates.density if est.candidates is not None else None
    beta_hat = density.beta_vector() if density is not None else np.zeros(0)
    lam_hat = est.solution.lam
    theta_hat = est.solution.theta_hat
    n_beta, q = beta_hat.size, lam_hat.size

    params = np.concatenate([beta_hat, lam_hat, [theta_hat]])

    def g_at(p):
        return _stacked_g(est, p[:n_beta], p[n_beta:n_beta + q], p[-1])

    g0 = g_at(params)
    dim = params.size
    jac = np.zeros((dim, dim))
    for j in range(dim):
        h = FD_REL_STEP * max(1.0, abs(params[j]))
        plus = params.copy()
        minus = params.copy()
        plus[j] += h
        minus[j] -= h
        jac[:, j] = (g_at(plus) - g_at(minus)) / (2.0 * h)

    vg = np.zeros((dim, dim))
    if n_beta:
        x_a = est.pop.covariates[est.a.indices]
        score_rows = density.score_rows(x_a, est.a.outcomes)
        vg[:n_beta, :n_beta] = design_variance_total(
            score_rows, est.a, est.pop.strata)
    centered = est.system.u - _target_vector(est, None)
    denom = 1.0 + centered @ lam_hat
    h_rows = np.column_stack([centered, est.b.outcomes - theta_hat]) / denom[:, None]
    vg[n_beta:, n_beta:] = h_rows.T @ h_rows
    return StackedSystem(g_value=g0, jacobian=jac, vg=vg,
                         n_beta=n_beta, n_constraints=q)


def sandwich_variance(sys: StackedSystem) -> np.ndarray:
    """Full parameter covariance; the mean's variance is the last diagonal entry."""
    try:
        inv = np.linalg.inv(sys.jacobian)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("singular Jacobian in the sandwich variance") from exc
    return inv @ sys.vg @ inv.T


def theta_variance(sys: StackedSystem) -> float:
    return float(sandwich_variance(sys)[-1, -1])


def wald_interval(theta_hat: float, var_theta: float,
                  level: float = 0.95) -> tuple[float, float]:
    """Two-sided Wald interval theta_hat +/- z * sqrt(var)."""
    if var_theta < 0.0:
        raise ValueError("negative variance")
    z = norm.ppf(0.5 + level / 2.0)
    half = z * np.sqrt(var_theta)
    return (float(theta_hat - half), float(theta_hat + half))
