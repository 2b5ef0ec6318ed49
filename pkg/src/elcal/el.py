"""Empirical-likelihood dual solver and the bias-calibrated estimators.

The primal problem maximizes  sum_{i in B} log p_i  subject to sum p_i = 1 and
calibration constraints  sum_i p_i u_i = t.  Its dual reduces to the root of

    g(lam) = sum_i (u_i - t) / (1 + lam'(u_i - t)) = 0,

with  p_i = n^{-1} / (1 + lam'(u_i - t)).  g is the negative gradient of the
convex function  L(lam) = -sum_i log(1 + lam'(u_i - t)), so a damped Newton
descent on L with denominators kept positive finds the unique feasible root or
detects that the targets fall outside the convex hull of the constraint rows.

Constraint columns are standardized inside the solver (centered at their
targets, scaled by column max-abs) and the multipliers unscaled afterward:
propensity columns live in (0,1) while covariate columns can be large.

The calibrated estimators stack two kinds of constraint rows: fitted candidate
selection probabilities, whose targets are population means of smoothed
propensities, and (optionally) raw covariates targeted at their population
means.  The mean constraint for the parameter of interest is profiled out:
after solving for the calibration multipliers, theta_hat = sum p_i y_i.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit

from ._newton import NumericalError
from .data import FinitePopulation, NonProbabilitySample, ProbabilitySample
from .density import (DEFAULT_GH_NODES, OutcomeDensityFit, fit_outcome_density,
                      smoothed_propensity)
from .propensity import (FittedPropensity, PropensityModelSpec, design_matrix,
                         solve_candidate_propensity)

__all__ = [
    "CalibrationSystem",
    "ELSolution",
    "ELInfeasibleError",
    "CandidateSet",
    "ELEstimate",
    "el_dual_solve",
    "solve_profiled",
    "single_candidate_system",
    "build_calibration_system",
    "estimate_mel",
    "estimate_el0",
    "estimate_elk",
]

DUAL_TOL = 1e-10
DENOM_FLOOR = 1e-10
MAX_DUAL_ITER = 200
MAX_HALVINGS = 30
STALL_LIMIT = 20


class ELInfeasibleError(NumericalError):
    """The calibration targets are not attainable with positive weights."""

    def __init__(self, message: str, label: str = ""):
        super().__init__(message)
        self.label = label


@dataclass(frozen=True)
class CalibrationSystem:
    """Per-unit constraint values, their targets, and provenance labels."""

    u: np.ndarray
    targets: np.ndarray
    labels: tuple[str, ...]

    def __post_init__(self):
        u = np.atleast_2d(np.asarray(self.u, dtype=float))
        t = np.atleast_1d(np.asarray(self.targets, dtype=float))
        if u.shape[1] != t.size or u.shape[1] != len(self.labels):
            raise ValueError("constraint matrix, targets and labels must align")
        if not np.all(np.isfinite(u)):
            raise ValueError("constraint rows must be finite")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "targets", t)

    @property
    def n_units(self) -> int:
        return self.u.shape[0]

    @property
    def n_constraints(self) -> int:
        return self.u.shape[1]


@dataclass(frozen=True)
class ELSolution:
    p: np.ndarray
    lam: np.ndarray
    theta_hat: float
    converged: bool
    constraint_residual: float
    iterations: int


def _degenerate_columns(v: np.ndarray, targets: np.ndarray) -> np.ndarray:
    # a column whose centered values vanish to rounding is already calibrated
    span = np.max(np.abs(v), axis=0)
    return span <= 1e-12 * (1.0 + np.abs(targets))


def _check_marginal_feasibility(v: np.ndarray, degenerate: np.ndarray, labels) -> None:
    # Necessary condition per column: 0 strictly inside [min, max] of the
    # centered values, unless the column is degenerate (identically zero).
    lo = v.min(axis=0)
    hi = v.max(axis=0)
    for j in range(v.shape[1]):
        if degenerate[j]:
            continue
        if not (lo[j] < 0.0 < hi[j]):
            raise ELInfeasibleError(
                f"constraint {labels[j]!r}: target outside the convex hull of its "
                f"per-unit values (centered range [{lo[j]:.6g}, {hi[j]:.6g}])",
                label=labels[j])


def el_dual_solve(system: CalibrationSystem, tol: float = DUAL_TOL,
                  max_iter: int = MAX_DUAL_ITER) -> ELSolution:
    """Solve the dual for the Lagrange multipliers and calibrated weights."""
    n, q = system.n_units, system.n_constraints
    if q == 0:
        p = np.full(n, 1.0 / n)
        return ELSolution(p=p, lam=np.zeros(0), theta_hat=float("nan"),
                          converged=True, constraint_residual=0.0, iterations=0)

    v = system.u - system.targets
    degenerate = _degenerate_columns(v, system.targets)
    _check_marginal_feasibility(v, degenerate, system.labels)
    scale = np.max(np.abs(v), axis=0)
    active = ~degenerate
    vs = v[:, active] / scale[active]
    qa = int(active.sum())

    def residual_of(denom_vec):
        # calibration residual of the normalized weights implied by lam;
        # this is the quantity the convergence tolerance is defined on
        p_raw = 1.0 / denom_vec
        return float(np.max(np.abs((p_raw / p_raw.sum()) @ v)))

    lam = np.zeros(qa)
    denom = np.ones(n)
    obj = 0.0  # -sum log(denom) at lam = 0
    resid = residual_of(denom)
    best_resid = resid
    stall = 0
    iterations = 0

    while resid > tol and iterations < max_iter:
        iterations += 1
        grad = (vs / denom[:, None]).sum(axis=0)
        hess = (vs / denom[:, None]**2).T @ vs
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step, *_ = np.linalg.lstsq(hess, grad, rcond=None)
        if not np.all(np.isfinite(step)):
            raise NumericalError("singular dual Hessian in the EL solver")
        scale_step = 1.0
        accepted = False
        for _ in range(MAX_HALVINGS):
            lam_new = lam + scale_step * step
            denom_new = 1.0 + vs @ lam_new
            if np.min(denom_new) > DENOM_FLOOR:
                obj_new = -float(np.sum(np.log(denom_new)))
                if obj_new <= obj + 1e-13 * (1.0 + abs(obj)):
                    accepted = True
                    break
            scale_step *= 0.5
        if not accepted:
            raise ELInfeasibleError(
                "EL dual step halving collapsed: targets appear infeasible "
                "(outside the joint convex hull of the constraint rows)",
                label="joint")
        lam, denom, obj = lam_new, denom_new, obj_new
        resid = residual_of(denom)
        if resid < best_resid * (1.0 - 1e-6):
            best_resid = resid
            stall = 0
        else:
            stall += 1
            if stall >= STALL_LIMIT:
                raise ELInfeasibleError(
                    "EL dual solver stalled above tolerance: targets appear "
                    "infeasible or the system is degenerate", label="joint")

    lam_full = np.zeros(q)
    lam_full[active] = lam / scale[active]
    p = 1.0 / (n * denom)
    p /= p.sum()
    residual = float(np.max(np.abs(p @ system.u - system.targets)))
    return ELSolution(p=p, lam=lam_full, theta_hat=float("nan"),
                      converged=residual <= tol, constraint_residual=residual,
                      iterations=iterations)


class CandidateSet:
    """Fitted selection-model candidates plus the outcome density for one dataset.

    Computed once and shared by every calibrated estimator on the same draw:
    the constraint columns, the smoothed-propensity targets (cached per density
    parameter vector, which the variance linearization re-evaluates), and the
    fitted density itself.
    """

    def __init__(self, pop: FinitePopulation, a: ProbabilitySample | None,
                 b: NonProbabilitySample, specs: list[PropensityModelSpec],
                 density_family: str = "normal", n_nodes: int = DEFAULT_GH_NODES):
        self.pop = pop
        self.b = b
        self.specs = list(specs)
        self.n_nodes = n_nodes
        self.fits: list[FittedPropensity] = []
        for k, spec in enumerate(self.specs):
            try:
                fit = solve_candidate_propensity(pop, b, spec)
            except NumericalError as exc:
                raise NumericalError(f"candidate model {k + 1}: {exc}") from exc
            if not fit.converged:
                raise NumericalError(
                    f"candidate model {k + 1} did not converge "
                    f"(residual {fit.residual_norm:.3g})")
            self.fits.append(fit)
        self.density: OutcomeDensityFit | None = None
        if any(s.uses_outcome for s in self.specs):
            if a is None:
                raise ValueError("outcome-dependent candidates need a probability sample")
            try:
                self.density = fit_outcome_density(pop, a, density_family)
            except NumericalError as exc:
                raise NumericalError(f"density fit: {exc}") from exc
        x_b = pop.covariates[b.indices]
        cols = [expit(design_matrix(f.spec.predictors, x_b, b.outcomes) @ f.phi_hat)
                for f in self.fits]
        self.u_matrix = np.column_stack(cols) if cols else np.empty((b.size, 0))
        self._target_cache: dict[bytes | None, np.ndarray] = {}

    @property
    def n_candidates(self) -> int:
        return len(self.fits)

    def beta_vector(self) -> np.ndarray:
        return self.density.beta_vector() if self.density is not None else np.zeros(0)

    def targets(self, beta: np.ndarray | None = None) -> np.ndarray:
        """Population means of the smoothed candidate propensities at ``beta``."""
        if beta is None and self.density is not None:
            beta = self.density.beta_vector()
        key = None if beta is None else np.asarray(beta, dtype=float).tobytes()
        cached = self._target_cache.get(key)
        if cached is not None:
            return cached
        density = self.density
        if beta is not None and density is not None:
            density = density.with_beta(beta)
        out = np.array([
            np.mean(smoothed_propensity(density, fit, self.pop.covariates,
                                        n_nodes=self.n_nodes))
            for fit in self.fits
        ])
        self._target_cache[key] = out
        return out


@dataclass(frozen=True)
class ELEstimate:
    """A calibrated estimate together with everything needed to linearize it."""

    solution: ELSolution
    system: CalibrationSystem
    candidates: CandidateSet | None
    include_greg: bool
    pop: FinitePopulation
    a: ProbabilitySample | None
    b: NonProbabilitySample
    method: str

    @property
    def theta_hat(self) -> float:
        return self.solution.theta_hat


def solve_profiled(system: CalibrationSystem, b: NonProbabilitySample) -> ELSolution:
    """Solve the calibration dual and profile out the mean: theta = sum p_i y_i."""
    solution = el_dual_solve(system)
    if not solution.converged:
        raise NumericalError(
            f"EL dual solver did not converge (residual {solution.constraint_residual:.3g})")
    return replace(solution, theta_hat=float(solution.p @ b.outcomes))


def single_candidate_system(candidates: CandidateSet, position: int,
                            candidate_index: int) -> CalibrationSystem:
    """Constraint system for one candidate out of a fitted set (no covariate rows)."""
    return CalibrationSystem(
        u=candidates.u_matrix[:, [position]],
        targets=candidates.targets()[[position]],
        labels=(f"propensity-{candidate_index}",))


def build_calibration_system(candidates: CandidateSet, include_greg: bool) -> CalibrationSystem:
    pop, b = candidates.pop, candidates.b
    cols = [candidates.u_matrix]
    targets = [candidates.targets()]
    labels = [f"propensity-{k + 1}" for k in range(candidates.n_candidates)]
    if include_greg:
        cols.append(pop.covariates[b.indices])
        targets.append(pop.covariates.mean(axis=0))
        labels += [f"covariate-{j + 1}" for j in range(pop.n_covariates)]
    return CalibrationSystem(u=np.column_stack(cols) if cols else np.empty((b.size, 0)),
                             targets=np.concatenate(targets) if targets else np.zeros(0),
                             labels=tuple(labels))


def estimate_mel(pop: FinitePopulation, a: ProbabilitySample | None,
                 b: NonProbabilitySample, candidate_specs: list[PropensityModelSpec],
                 density_family: str = "normal", include_greg: bool = False,
                 n_nodes: int = DEFAULT_GH_NODES,
                 candidates: CandidateSet | None = None) -> ELEstimate:
    """Multiple bias calibration: calibrate the sample on every candidate model.

    Fits each candidate selection model, fits the outcome density, constrains
    the weighted candidate propensities to their smoothed population means
    (plus covariate means when ``include_greg``), and profiles out the mean.
    A pre-fitted ``candidates`` set can be passed to share work across
    estimator variants on the same draw.
    """
    if candidates is None:
        candidates = CandidateSet(pop, a, b, candidate_specs, density_family, n_nodes)
    system = build_calibration_system(candidates, include_greg)
    solution = solve_profiled(system, b)
    method = "MEL_GREG" if include_greg else "MEL"
    return ELEstimate(solution=solution, system=system, candidates=candidates,
                      include_greg=include_greg, pop=pop, a=a, b=b, method=method)


def estimate_el0(pop: FinitePopulation, b: NonProbabilitySample) -> ELEstimate:
    """Traditional EL: calibrate covariate means only."""
    system = CalibrationSystem(
        u=pop.covariates[b.indices],
        targets=pop.covariates.mean(axis=0),
        labels=tuple(f"covariate-{j + 1}" for j in range(pop.n_covariates)))
    solution = solve_profiled(system, b)
    return ELEstimate(solution=solution, system=system, candidates=None,
                      include_greg=True, pop=pop, a=None, b=b, method="EL_0")


def estimate_elk(pop: FinitePopulation, a: ProbabilitySample, b: NonProbabilitySample,
                 spec: PropensityModelSpec, density_family: str = "normal",
                 n_nodes: int = DEFAULT_GH_NODES) -> ELEstimate:
    """Single-candidate calibration (one selection model, no covariate constraints)."""
    return estimate_mel(pop, a, b, [spec], density_family=density_family,
                        include_greg=False, n_nodes=n_nodes)
