"""Quasiparticle density dynamics, trapping-rate extraction and vortex threshold.

Densities are normalized to the Cooper-pair density and rates are held in
1/s throughout; Table-style reports convert trapping rates to 1/ms at the edge.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import constants

from .errors import ConfigError, DegenerateInputError
from .ode import dopri5

PHI0 = constants.h / (2 * constants.e)


class LowConfidenceWarning(UserWarning):
    """A fit was made on data spanning too little dynamic range."""


@dataclass(frozen=True)
class Injection:
    """QP injection at `t_start`.

    ``shape="jump"`` adds `x0` instantaneously; ``shape="rect"`` spreads the
    same total density over ``[t_start, t_stop)`` as a constant generation rate.
    """

    x0: float = 0.0
    t_start: float = 0.0
    t_stop: float | None = None
    shape: str = "jump"

    def __post_init__(self):
        if not self.x0 >= 0:
            raise ConfigError(f"injection x0 must be non-negative, got {self.x0}")
        if self.shape not in ("jump", "rect"):
            raise ConfigError(f"injection shape must be 'jump' or 'rect', got {self.shape!r}")
        if self.shape == "rect" and (self.t_stop is None or not self.t_stop > self.t_start):
            raise ConfigError("rect injection needs t_stop > t_start")


@dataclass(frozen=True)
class RtParams:
    """Coefficients of ``dx/dt = -r x^2 - s x + g(t)`` (all in 1/s)."""

    r: float
    s: float
    g_background: float = 0.0
    injection: Injection = field(default_factory=Injection)

    def __post_init__(self):
        for name in ("r", "s", "g_background"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ConfigError(f"{name} must be finite and non-negative, got {v}")
        if self.g_background > 0 and self.r == 0 and self.s == 0:
            raise ConfigError("constant generation with r = s = 0 has no steady state")

    @property
    def steady_state(self) -> float:
        """Positive root of ``r x^2 + s x = g_background`` (0 without generation)."""
        g = self.g_background
        if g == 0:
            return 0.0
        # cancellation-free form of (-s + sqrt(s^2 + 4 r g)) / (2 r)
        return 2.0 * g / (self.s + np.sqrt(self.s**2 + 4.0 * self.r * g))

    def generation(self, t: float) -> float:
        inj = self.injection
        g = self.g_background
        if inj.shape == "rect" and inj.t_start <= t < inj.t_stop:
            g += inj.x0 / (inj.t_stop - inj.t_start)
        return g


@dataclass(frozen=True)
class QpTrace:
    """Normalized QP density ``x_qp`` sampled at `times` (s)."""

    times: np.ndarray
    x_qp: np.ndarray
    x_steady: float = 0.0

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        x = np.asarray(self.x_qp, dtype=float)
        if t.shape != x.shape or t.ndim != 1:
            raise ConfigError("times and x_qp must be 1-D arrays of equal length")
        if np.any(np.diff(t) <= 0):
            raise ConfigError("times must be strictly increasing")
        for arr in (t, x):
            arr.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "x_qp", x)

    @property
    def excess(self) -> np.ndarray:
        """Density above the background steady state."""
        return self.x_qp - self.x_steady


@dataclass(frozen=True)
class GapParams:
    """Junction-electrode gap (in micro-eV) and qubit frequency (in GHz)."""

    delta_uev: float = 200.0
    f_q_ghz: float = 4.15

    def __post_init__(self):
        if not self.delta_uev > 0:
            raise ConfigError(f"delta must be positive, got {self.delta_uev}")
        if not self.f_q_ghz > 0:
            raise ConfigError(f"f_q must be positive, got {self.f_q_ghz}")
        if constants.h * self.f_q_ghz * 1e9 >= 2 * self.delta_joule:
            raise ConfigError("qubit photon energy must lie below the pair-breaking energy 2*delta")

    @property
    def delta_joule(self) -> float:
        return self.delta_uev * 1e-6 * constants.e


def _xqp_factor(gap: GapParams) -> float:
    # sqrt(pi hbar / (4 f_q Delta)), in seconds
    return np.sqrt(np.pi * constants.hbar / (4.0 * gap.f_q_ghz * 1e9 * gap.delta_joule))


def xqp_from_gamma1(delta_gamma1, gap: GapParams):
    """Excess normalized QP density from the excess qubit decay rate (1/s).

    Symmetric-gap relation ``x = sqrt(pi hbar / (4 f_q Delta)) * dGamma1``.
    """
    dg = np.asarray(delta_gamma1, dtype=float)
    if np.any(dg < 0):
        raise ConfigError("delta_gamma1 must be non-negative")
    out = _xqp_factor(gap) * dg
    return float(out) if out.ndim == 0 else out


def gamma1_from_xqp(x_qp, gap: GapParams):
    """Inverse of `xqp_from_gamma1`."""
    x = np.asarray(x_qp, dtype=float)
    out = x / _xqp_factor(gap)
    return float(out) if out.ndim == 0 else out


def integrate_rt(params: RtParams, t_grid, *, rtol: float = 1e-9) -> QpTrace:
    """Integrate the Rothwarf-Taylor equation on `t_grid`.

    The density starts at the background steady state at ``t_grid[0]``; an
    instantaneous injection at or before that time is added to the initial
    value. Integration restarts at injection edges so the adaptive steps
    never straddle a discontinuity in g(t). Values at a jump time are the
    post-jump density.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size < 1:
        raise ConfigError("t_grid must be a nonempty 1-D array")
    if np.any(np.diff(t_grid) <= 0):
        raise ConfigError("t_grid must be strictly increasing")
    inj = params.injection
    x_ss = params.steady_state
    t0, t1 = t_grid[0], t_grid[-1]

    x = x_ss
    if inj.shape == "jump" and inj.t_start <= t0:
        x += inj.x0
    events = []
    if inj.x0 > 0:
        if t0 < inj.t_start <= t1:
            events.append(inj.t_start)
        if inj.shape == "rect" and t0 < inj.t_stop <= t1:
            events.append(inj.t_stop)
    edges = [t0] + sorted(set(events)) + [t1]

    r, s = params.r, params.s

    def rhs(t, y):
        return -r * y * y - s * y + params.generation(t)

    out = np.empty(t_grid.size)
    out[0] = x
    for a, b in zip(edges[:-1], edges[1:]):
        if b <= a:
            continue
        inside = t_grid[(t_grid > a) & (t_grid <= b)]
        pts = np.concatenate([[a], inside])
        if pts[-1] != b:
            pts = np.append(pts, b)
        # midpoint evaluation keeps the rect-pulse generation constant over the piece
        g_mid = params.generation(0.5 * (a + b))

        def seg_rhs(t, y, g_mid=g_mid):
            return -r * y * y - s * y + g_mid

        sol = dopri5(seg_rhs, pts, [x], rtol=rtol, nonnegative=True)[:, 0]
        idx = np.searchsorted(t_grid, inside)
        out[idx] = sol[1 : 1 + inside.size]
        x = sol[-1]
        if inj.shape == "jump" and b == inj.t_start and inj.x0 > 0:
            x += inj.x0
            if idx.size and t_grid[idx[-1]] == b:
                out[idx[-1]] = x
    return QpTrace(times=t_grid, x_qp=out, x_steady=x_ss)


@dataclass(frozen=True)
class TrappingFit:
    s: float
    x0: float
    s_stderr: float
    x0_stderr: float
    low_confidence: bool = False
    n_points: int = 0

    @property
    def s_per_ms(self) -> float:
        return self.s * 1e-3

    def to_dict(self) -> dict:
        return {
            "s_per_s": self.s,
            "s_per_ms": self.s_per_ms,
            "s_stderr_per_s": self.s_stderr,
            "x0": self.x0,
            "x0_stderr": self.x0_stderr,
            "low_confidence": self.low_confidence,
            "n_points": self.n_points,
        }


def fit_trapping_rate(trace: QpTrace, rel_sigma=None, *, excess: bool = True) -> TrappingFit:
    """Fit ``dx(t) = x0 exp(-s t)`` by weighted linear regression of ``ln dx`` on t.

    `rel_sigma` gives the relative uncertainty of each point (the standard
    deviation of its logarithm); uniform when omitted. With `excess`, the
    trace's stored steady state is subtracted first.

    Fewer than four points or any non-positive value raises
    `DegenerateInputError`. Less than one decade between the largest and
    smallest value sets `low_confidence` and warns.
    """
    y = trace.excess if excess else trace.x_qp
    t = trace.times
    if y.size < 4:
        raise DegenerateInputError(f"need at least 4 points to fit a decay, got {y.size}")
    if np.any(y <= 0):
        raise DegenerateInputError(
            "decay fit needs strictly positive densities; subtract the background "
            "steady state first and drop points at or below it"
        )
    w = np.ones_like(y) if rel_sigma is None else 1.0 / np.asarray(rel_sigma, dtype=float)
    design = np.column_stack([np.ones_like(t), -t]) * w[:, None]
    rhs = np.log(y) * w
    coef, _, rank, _ = np.linalg.lstsq(design, rhs, rcond=None)
    if rank < 2:
        raise DegenerateInputError("decay fit is rank deficient (all times equal?)")
    resid = rhs - design @ coef
    dof = y.size - 2
    s2 = float(resid @ resid) / dof if rel_sigma is None else 1.0
    cov = np.linalg.inv(design.T @ design) * s2
    ln_x0, s = coef
    x0 = float(np.exp(ln_x0))
    low = bool(y.max() / y.min() < 10.0)
    if low:
        warnings.warn(
            f"decay spans only {y.max() / y.min():.3g}x in density; trapping rate is low confidence",
            LowConfidenceWarning,
            stacklevel=2,
        )
    return TrappingFit(
        s=float(s),
        x0=x0,
        s_stderr=float(np.sqrt(cov[1, 1])),
        x0_stderr=float(x0 * np.sqrt(cov[0, 0])),
        low_confidence=low,
        n_points=int(y.size),
    )


def vortex_threshold(w_um: float) -> float:
    """Vortex-expulsion field ``Phi0 / w^2`` in micro-tesla for a strip of width `w_um` (um)."""
    if not w_um > 0:
        raise ConfigError(f"w must be positive, got {w_um}")
    return PHI0 / (w_um * 1e-6) ** 2 * 1e6


def trace_from_gamma1(tau_qp, delta_gamma1, gap: GapParams) -> QpTrace:
    """Recovery trace in x_qp units from measured excess decay rates."""
    return QpTrace(times=np.asarray(tau_qp, float), x_qp=xqp_from_gamma1(delta_gamma1, gap))
