"""Embedded Dormand-Prince 5(4) integrator with output on a fixed grid."""

from __future__ import annotations

import numpy as np

from .errors import NumericalError


class IntegrationError(NumericalError):
    """Step size collapsed; carries the time and state where it happened."""

    def __init__(self, message, t, y):
        super().__init__(message)
        self.t = t
        self.y = np.asarray(y)


# Dormand & Prince (1980) tableau, 5th-order solution propagated.
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)
_E = _B5 - _B4


def _initial_step(fun, t0, y0, f0, rtol, atol, span):
    scale = atol + rtol * np.abs(y0)
    d0 = np.sqrt(np.mean((y0 / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    return min(h, span)


def dopri5(
    fun,
    t_grid,
    y0,
    *,
    rtol: float = 1e-9,
    atol: float = 1e-30,
    nonnegative: bool = False,
    max_steps: int = 1_000_000,
) -> np.ndarray:
    """Integrate ``y' = fun(t, y)`` and return the solution at each `t_grid` point.

    Steps end exactly on grid points. With `nonnegative`, any step producing a
    negative component is rejected and retried with a smaller step, so the
    returned solution never leaves the non-negative orthant.

    Returns an array of shape ``(len(t_grid), len(y0))``.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    y = np.atleast_1d(np.asarray(y0, dtype=float)).copy()
    out = np.empty((t_grid.size, y.size))
    out[0] = y
    if t_grid.size == 1:
        return out
    if np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be strictly increasing")

    t = t_grid[0]
    f = np.asarray(fun(t, y), dtype=float)
    h = _initial_step(fun, t, y, f, rtol, atol, t_grid[-1] - t)
    k = np.empty((7, y.size))
    steps = 0
    for i in range(1, t_grid.size):
        t_target = t_grid[i]
        while t < t_target:
            if steps >= max_steps:
                raise IntegrationError(f"exceeded {max_steps} steps at t={t:.6g}", t, y)
            last = t + h >= t_target - 4 * np.finfo(float).eps * abs(t_target)
            h_try = t_target - t if last else h
            min_h = 16 * np.finfo(float).eps * max(abs(t), abs(t_target), 1e-300)
            if h_try < min_h:
                raise IntegrationError(
                    f"step size underflow (h={h_try:.3e}) at t={t:.6g}", t, y
                )
            k[0] = f
            for s in range(1, 7):
                k[s] = fun(t + _C[s] * h_try, y + h_try * (np.asarray(_A[s]) @ k[:s]))
            y_new = y + h_try * (_B5 @ k)
            err_vec = h_try * (_E @ k)
            scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
            err = np.sqrt(np.mean((err_vec / scale) ** 2))
            steps += 1
            if nonnegative and np.any(y_new < 0):
                h = 0.25 * h_try
                continue
            if err <= 1.0:
                t = t_target if last else t + h_try
                y = y_new
                f = k[6]
                factor = 5.0 if err == 0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
                h = h_try * factor if not last else max(h, h_try * factor)
            else:
                h = h_try * max(0.2, 0.9 * err ** -0.2)
        out[i] = y
    return out
