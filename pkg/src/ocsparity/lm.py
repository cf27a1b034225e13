"""Small Levenberg-Marquardt solver with Marquardt diagonal scaling.

Only what the spectral and decay fits need: dense Jacobians, optional box
bounds enforced by projection, and a full cost history for diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConvergenceError


@dataclass
class LMResult:
    x: np.ndarray
    cost: float
    jac: np.ndarray
    residuals: np.ndarray
    n_iter: int
    converged: bool
    history: list = field(default_factory=list)


class LMConvergenceError(ConvergenceError):
    """Raised when the iteration budget is exhausted.

    Carries the last iterate and the cost history so callers can report them.
    """

    def __init__(self, message, x, history):
        super().__init__(message)
        self.x = np.asarray(x)
        self.history = list(history)


def levenberg_marquardt(
    fun: Callable[[np.ndarray], np.ndarray],
    jac: Callable[[np.ndarray], np.ndarray],
    x0,
    *,
    xtol: float = 1e-8,
    max_iter: int = 200,
    lower=None,
    upper=None,
    lam0: float = 1e-3,
    hess: Callable | None = None,
) -> LMResult:
    """Minimize ``0.5 * ||fun(x)||^2``.

    By default the step solves the damped Gauss-Newton system
    ``(J^T J + lam D) dx = -J^T r`` with Marquardt scaling ``D = diag(J^T J)``.
    When residuals stay large at the solution, ``J^T J`` is a poor curvature
    model and convergence degrades to linear; `hess` may then supply the exact
    Hessian of the objective, which replaces ``J^T J`` (damping and scaling
    unchanged). Indefinite damped systems are rejected like failed steps.

    Converged when an accepted step satisfies ``|dx| <= xtol * (|x| + xtol)``,
    when the residual vanishes to rounding level, or when the damping needed
    to decrease the cost exceeds 1e16 (no descent left at working precision).
    Raises `LMConvergenceError` after `max_iter` iterations otherwise.
    """
    x = np.array(x0, dtype=float)
    lo = np.full_like(x, -np.inf) if lower is None else np.asarray(lower, float)
    hi = np.full_like(x, np.inf) if upper is None else np.asarray(upper, float)
    x = np.clip(x, lo, hi)

    r = fun(x)
    cost = 0.5 * float(r @ r)
    history = [cost]
    lam = lam0
    J = jac(x)
    for it in range(1, max_iter + 1):
        g = J.T @ r
        JtJ = J.T @ J
        A = JtJ if hess is None else hess(x)
        d = np.diag(JtJ).copy()
        d[d <= 0] = 1.0
        while True:
            try:
                chol = np.linalg.cholesky(A + lam * np.diag(d))
                step = -np.linalg.solve(chol.T, np.linalg.solve(chol, g))
            except np.linalg.LinAlgError:
                step = None
            if step is not None:
                x_new = np.clip(x + step, lo, hi)
                r_new = fun(x_new)
                cost_new = 0.5 * float(r_new @ r_new)
                if np.isfinite(cost_new) and cost_new <= cost:
                    break
            lam *= 10.0
            if lam > 1e16:
                return LMResult(x, cost, J, r, it, True, history)
        dx = x_new - x
        x, r, cost = x_new, r_new, cost_new
        history.append(cost)
        lam = max(lam / 10.0, 1e-15)
        J = jac(x)
        small_step = np.linalg.norm(dx) <= xtol * (np.linalg.norm(x) + xtol)
        if small_step or cost <= 1e-300:
            return LMResult(x, cost, J, r, it, True, history)
    raise LMConvergenceError(
        f"Levenberg-Marquardt did not converge in {max_iter} iterations "
        f"(last objective {cost:.6e})",
        x,
        history,
    )
