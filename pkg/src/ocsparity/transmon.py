"""Charge-basis transmon spectrum and parity-split transition frequencies.

The Hamiltonian is the Cooper-pair-box form in the charge basis,

    H = 4 E_c (n - n_g)^2 - (E_J / 2) sum_n (|n><n+1| + |n+1><n|),

with n counted in Cooper pairs. One extra electron on the island shifts the
offset charge by half a Cooper pair, so the odd-parity branch is the even
branch evaluated at ``ng + 0.5``. All energies are in GHz (E/h).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.optimize import brentq

from .errors import BracketError, ConfigError, ConvergenceError

#: Absolute level agreement required between cutoff N and 2N (GHz).
CONVERGENCE_TOL_GHZ = 1e-9

DEFAULT_CUTOFF = 30


@dataclass(frozen=True)
class TransmonParams:
    """Device parameters of an offset-charge-sensitive transmon.

    Parameters
    ----------
    ej : float
        Josephson energy E_J in GHz.
    ec : float
        Charging energy E_c in GHz (charging term ``4 E_c (n - n_g)^2``).
    ng : float
        Reduced offset charge in units of 2e, taken modulo 1.
    n_charge_cutoff : int
        Charge states kept on each side, ``n = -N .. N``.
    """

    ej: float
    ec: float
    ng: float = 0.0
    n_charge_cutoff: int = DEFAULT_CUTOFF

    def __post_init__(self):
        if not self.ej >= 0:
            raise ConfigError(f"ej must be non-negative, got {self.ej}")
        if not self.ec > 0:
            raise ConfigError(f"ec must be positive, got {self.ec}")
        if int(self.n_charge_cutoff) != self.n_charge_cutoff or self.n_charge_cutoff < 5:
            raise ConfigError(
                f"n_charge_cutoff must be an integer >= 5, got {self.n_charge_cutoff}"
            )
        if not np.isfinite(self.ng):
            raise ConfigError(f"ng must be finite, got {self.ng}")

    @property
    def ej_over_ec(self) -> float:
        return self.ej / self.ec

    def with_ng(self, ng: float) -> "TransmonParams":
        return TransmonParams(self.ej, self.ec, ng, self.n_charge_cutoff)


@dataclass(frozen=True)
class DispersionCurve:
    """f01 of both parity branches on an offset-charge grid.

    ``f01_even``, ``f01_odd`` and ``f01_bar`` are in GHz; ``delta_f_max`` is the
    largest half-splitting ``|f01_even - f01_odd| / 2`` in MHz.
    """

    ng_grid: np.ndarray
    f01_even: np.ndarray
    f01_odd: np.ndarray
    f01_bar: float
    delta_f_max: float
    params: TransmonParams | None = None


def _levels(ej: float, ec: float, ng: float, cutoff: int, n_levels: int) -> np.ndarray:
    ng = ng - np.round(ng)
    n = np.arange(-cutoff, cutoff + 1, dtype=float)
    diag = 4.0 * ec * (n - ng) ** 2
    off = np.full(2 * cutoff, -0.5 * ej)
    try:
        w = eigh_tridiagonal(
            diag, off, eigvals_only=True, select="i", select_range=(0, n_levels - 1)
        )
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(f"tridiagonal eigensolver failed: {exc}") from exc
    return np.sort(w)


def eigenlevels(params: TransmonParams, n_levels: int = 2) -> np.ndarray:
    """Lowest `n_levels` eigenenergies (GHz), ascending.

    Every call repeats the diagonalization with twice the charge cutoff and
    raises `ConvergenceError` if any returned level moves by more than
    ``CONVERGENCE_TOL_GHZ`` (plus a 1e-12 relative allowance).
    """
    cutoff = int(params.n_charge_cutoff)
    if n_levels < 1 or n_levels > 2 * cutoff - 1:
        raise ConfigError(
            f"n_levels must be in [1, {2 * cutoff - 1}] for cutoff {cutoff}, got {n_levels}"
        )
    w = _levels(params.ej, params.ec, params.ng, cutoff, n_levels)
    w_ref = _levels(params.ej, params.ec, params.ng, 2 * cutoff, n_levels)
    err = np.abs(w - w_ref)
    tol = CONVERGENCE_TOL_GHZ + 1e-12 * np.abs(w_ref)
    if np.any(err > tol):
        k = int(np.argmax(err - tol))
        raise ConvergenceError(
            f"level {k} not converged at n_charge_cutoff={cutoff}: "
            f"changes by {err[k]:.3e} GHz when the cutoff is doubled"
        )
    return w


def transition_frequency(params: TransmonParams, ng: float | None = None) -> float:
    """Ground to first excited state frequency f01 in GHz."""
    p = params if ng is None else params.with_ng(ng)
    w = eigenlevels(p, 2)
    return float(w[1] - w[0])


def dispersion_curve(params: TransmonParams, ng_points: int = 201) -> DispersionCurve:
    """Evaluate both parity branches on ``linspace(-0.5, 0.5, ng_points)``.

    ``f01_bar`` is taken at the branch crossing ng = 0.25. ``delta_f_max`` is
    evaluated at the band extrema ng = 0 and ng = 0.5, so it equals the grid
    maximum whenever the grid contains ng = 0 (odd `ng_points`) and bounds it
    from above otherwise.
    """
    if ng_points < 3:
        raise ConfigError(f"ng_points must be >= 3, got {ng_points}")
    grid = np.linspace(-0.5, 0.5, int(ng_points))
    even = np.array([transition_frequency(params, g) for g in grid])
    odd = np.array([transition_frequency(params, g + 0.5) for g in grid])
    f_bar = transition_frequency(params, 0.25)
    split = abs(transition_frequency(params, 0.0) - transition_frequency(params, 0.5)) / 2
    return DispersionCurve(
        ng_grid=grid,
        f01_even=even,
        f01_odd=odd,
        f01_bar=f_bar,
        delta_f_max=split * 1e3,
        params=params,
    )


def fit_ej_ec(
    f01_bar: float, ej_over_ec: float, n_charge_cutoff: int = DEFAULT_CUTOFF
) -> TransmonParams:
    """Find (E_J, E_c) at a fixed ratio whose f01 at ng = 0.25 equals `f01_bar` (GHz).

    The spectrum scales linearly with E_c at fixed ratio, so the bracket is
    built around the plasma-frequency estimate ``(sqrt(8 r) - 1) E_c``.
    """
    if not ej_over_ec > 4:
        raise ConfigError(f"ej_over_ec must exceed 4, got {ej_over_ec}")
    if not f01_bar > 0:
        raise ConfigError(f"f01_bar must be positive, got {f01_bar}")

    def mismatch(ec):
        p = TransmonParams(ej_over_ec * ec, ec, 0.25, n_charge_cutoff)
        return transition_frequency(p) - f01_bar

    guess = f01_bar / (np.sqrt(8.0 * ej_over_ec) - 1.0)
    lo, hi = 0.25 * guess, 4.0 * guess
    f_lo, f_hi = mismatch(lo), mismatch(hi)
    if f_lo * f_hi > 0:
        raise BracketError(
            f"no root for E_c in [{lo:.6g}, {hi:.6g}] GHz: "
            f"f01 mismatch {f_lo:.6g} and {f_hi:.6g} GHz at the ends"
        )
    ec = brentq(mismatch, lo, hi, xtol=1e-13, rtol=4 * np.finfo(float).eps)
    return TransmonParams(ej_over_ec * ec, ec, 0.25, n_charge_cutoff)
