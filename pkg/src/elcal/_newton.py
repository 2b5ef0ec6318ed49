"""Damped Newton iterations shared by the likelihood and estimating-equation fits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class NumericalError(RuntimeError):
    """A solver failed: singular system, separation, boundary or non-convergence."""


@dataclass
class NewtonResult:
    x: np.ndarray
    converged: bool
    residual_norm: float
    iterations: int


def newton_root(fun, jac, x0, tol=1e-8, max_iter=100, max_halvings=30):
    """Solve fun(x) = 0 by Newton's method with step halving on the residual.

    ``jac`` returns the Jacobian of ``fun``.  Steps are halved until the
    residual 2-norm decreases; when even a fully halved Newton step fails, a
    Levenberg-Marquardt damped step on the merit 0.5 * ||fun||^2 is tried as a
    safeguard.  Convergence is declared on the residual max-norm.  A singular
    Jacobian raises NumericalError.
    """
    x = np.asarray(x0, dtype=float).copy()
    f = np.asarray(fun(x), dtype=float)
    merit = float(f @ f)
    mu = 0.0
    for it in range(1, max_iter + 1):
        if np.max(np.abs(f)) <= tol:
            return NewtonResult(x, True, float(np.max(np.abs(f))), it - 1)
        J = np.asarray(jac(x), dtype=float)
        try:
            step = np.linalg.solve(J, -f)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"singular Jacobian at iteration {it}") from exc
        scale = 1.0
        accepted = False
        for _ in range(max_halvings):
            x_new = x + scale * step
            f_new = np.asarray(fun(x_new), dtype=float)
            merit_new = float(f_new @ f_new)
            if np.isfinite(merit_new) and merit_new < merit:
                accepted = True
                break
            scale *= 0.5
        if not accepted:
            # damped Gauss-Newton fallback for regions where the pure Newton
            # direction overshoots the residual valley
            jtj = J.T @ J
            base = float(np.trace(jtj)) / max(1, jtj.shape[0])
            mu = max(mu, 1e-6 * base) if mu == 0.0 else mu
            rhs = -J.T @ f
            for _ in range(40):
                try:
                    step = np.linalg.solve(jtj + mu * np.eye(jtj.shape[0]), rhs)
                except np.linalg.LinAlgError:
                    mu *= 10.0
                    continue
                x_new = x + step
                f_new = np.asarray(fun(x_new), dtype=float)
                merit_new = float(f_new @ f_new)
                if np.isfinite(merit_new) and merit_new < merit:
                    accepted = True
                    mu *= 0.1
                    break
                mu *= 10.0
            if not accepted:
                return NewtonResult(x, False, float(np.max(np.abs(f))), it)
        x, f, merit = x_new, f_new, merit_new
    return NewtonResult(x, np.max(np.abs(f)) <= tol, float(np.max(np.abs(f))), max_iter)


def newton_maximize(score, hessian, x0, tol=1e-8, max_iter=100, max_halvings=30,
                    objective=None):
    """Maximize a smooth concave objective via Newton ascent on its score.

    The ascent direction is -H^{-1} s; when ``objective`` is given the step is
    halved until the objective does not decrease, otherwise until the score
    max-norm decreases.  Convergence is score max-norm <= tol.
    """
    x = np.asarray(x0, dtype=float).copy()
    s = np.asarray(score(x), dtype=float)
    norm = float(np.max(np.abs(s)))
    obj = objective(x) if objective is not None else None
    for it in range(1, max_iter + 1):
        if norm <= tol:
            return NewtonResult(x, True, norm, it - 1)
        H = np.asarray(hessian(x), dtype=float)
        try:
            step = np.linalg.solve(H, -s)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"singular Hessian at iteration {it}") from exc
        scale = 1.0
        for _ in range(max_halvings):
            x_new = x + scale * step
            s_new = np.asarray(score(x_new), dtype=float)
            norm_new = float(np.max(np.abs(s_new)))
            if objective is not None:
                obj_new = objective(x_new)
                slack = 1e-12 * (1.0 + abs(obj))
                ok = np.isfinite(obj_new) and np.isfinite(norm_new) and obj_new >= obj - slack
            else:
                ok = np.isfinite(norm_new) and norm_new < norm
            if ok:
                break
            scale *= 0.5
        else:
            return NewtonResult(x, False, norm, it)
        x, s, norm = x_new, s_new, norm_new
        if objective is not None:
            obj = objective(x_new)
    return NewtonResult(x, norm <= tol, norm, max_iter)
