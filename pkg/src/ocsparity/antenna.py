"""Junction antenna coupling and blackbody-driven parity switching.

The junction is an RCSJ load ``Y_j = 1/R_n + i 2 pi f C_j`` seen by a
radiation impedance ``Z_rad(f)``. The power coupling efficiency is

    e_c = 1 - |(Z_rad - Z_j*) / (Z_rad + Z_j)|^2 = 4 Re Z_rad Re Z_j / |Z_rad + Z_j|^2

and the parity rate from a single-mode blackbody at temperature T* is

    Gamma = efficiency_scale * integral_{f_min}^{f_max} e_c(f) n(f, T*) df

with Bose occupancy ``n = 1 / (exp(hf / k T*) - 1)``. With e_c dimensionless
and f in Hz the integral is a photon flux in 1/s; `efficiency_scale` is the
fraction of absorbed pair-breaking photons that end up flipping parity
(1 means every one does).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import constants
from scipy.optimize import brentq

from .errors import (
    BracketError,
    ConfigError,
    ConvergenceError,
    CoverageError,
    SingularInputError,
)

H_OVER_K = constants.h / constants.k

# Gauss-Legendre nodes on [0, 1] for the per-segment quadrature
_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


def _strictly_increasing(name, f):
    if f.ndim != 1 or f.size < 2:
        raise ConfigError(f"{name} needs at least 2 frequency points")
    if not np.all(np.isfinite(f)) or np.any(f <= 0):
        raise ConfigError(f"{name} frequencies must be finite and positive")
    if np.any(np.diff(f) <= 0):
        raise ConfigError(f"{name} frequencies must be strictly increasing")


def _readonly(*arrays):
    for a in arrays:
        a.setflags(write=False)


@dataclass(frozen=True)
class RcsjParams:
    """Junction normal-state resistance `r_n` (ohm) and self-capacitance `c_j` (F)."""

    r_n: float
    c_j: float

    def __post_init__(self):
        if not (np.isfinite(self.r_n) and self.r_n > 0):
            raise ConfigError(f"r_n must be finite and positive, got {self.r_n}")
        if not (np.isfinite(self.c_j) and self.c_j >= 0):
            raise ConfigError(f"c_j must be finite and non-negative, got {self.c_j}")


@dataclass(frozen=True)
class ImpedanceTable:
    """Tabulated radiation impedance ``Z_rad = z_real + i z_imag`` (ohm) on `freqs` (Hz)."""

    freqs: np.ndarray
    z_real: np.ndarray
    z_imag: np.ndarray
    source_label: str = ""

    def __post_init__(self):
        f = np.asarray(self.freqs, dtype=float)
        zr = np.asarray(self.z_real, dtype=float)
        zi = np.asarray(self.z_imag, dtype=float)
        if not (f.shape == zr.shape == zi.shape):
            raise ConfigError("freqs, z_real and z_imag must have equal length")
        _strictly_increasing("impedance table", f)
        if not (np.all(np.isfinite(zr)) and np.all(np.isfinite(zi))):
            raise ConfigError("impedance values must be finite")
        if np.any(zr < 0):
            i = int(np.argmax(zr < 0))
            raise ConfigError(
                f"passive antenna needs Re Z >= 0; got {zr[i]} ohm at {f[i]:.6g} Hz"
            )
        _readonly(f, zr, zi)
        object.__setattr__(self, "freqs", f)
        object.__setattr__(self, "z_real", zr)
        object.__setattr__(self, "z_imag", zi)

    @property
    def z(self) -> np.ndarray:
        return self.z_real + 1j * self.z_imag


@dataclass(frozen=True)
class EfficiencyCurve:
    """Coupling efficiency on a frequency grid, linearly interpolated in between."""

    freqs: np.ndarray
    e_c: np.ndarray
    label: str = ""

    def __post_init__(self):
        f = np.asarray(self.freqs, dtype=float)
        e = np.asarray(self.e_c, dtype=float)
        if f.shape != e.shape:
            raise ConfigError("freqs and e_c must have equal length")
        _strictly_increasing("efficiency curve", f)
        if not np.all(np.isfinite(e)) or np.any(e < 0) or np.any(e > 1):
            raise ConfigError("e_c values must lie in [0, 1]")
        _readonly(f, e)
        object.__setattr__(self, "freqs", f)
        object.__setattr__(self, "e_c", e)

    @classmethod
    def constant(cls, value: float, f_min: float, f_max: float, label: str = "") -> "EfficiencyCurve":
        """Flat efficiency `value` on ``[f_min, f_max]``."""
        return cls(np.array([f_min, f_max]), np.array([value, value]), label or f"constant {value}")

    def __call__(self, f):
        return np.interp(f, self.freqs, self.e_c)

    def check_covers(self, f_min: float, f_max: float) -> None:
        """Raise `CoverageError` unless the grid spans ``[f_min, f_max]``."""
        lo, hi = self.freqs[0], self.freqs[-1]
        slack = 1e-12 * max(abs(f_min), abs(f_max))
        gaps = []
        if lo > f_min + slack:
            gaps.append(f"[{f_min:.6g}, {lo:.6g}] Hz")
        if hi < f_max - slack:
            gaps.append(f"[{hi:.6g}, {f_max:.6g}] Hz")
        if gaps:
            raise CoverageError(
                f"efficiency curve {self.label!r} spans [{lo:.6g}, {hi:.6g}] Hz and does not "
                f"cover the band; missing {' and '.join(gaps)}"
            )


@dataclass(frozen=True)
class BlackbodySource:
    """Single-mode blackbody at `t_star` (K) integrated over ``[f_min, f_max]`` (Hz)."""

    t_star: float
    f_min: float
    f_max: float = 400e9

    def __post_init__(self):
        if not (np.isfinite(self.t_star) and self.t_star > 0):
            raise ConfigError(f"t_star must be positive, got {self.t_star}")
        if not (0 <= self.f_min < self.f_max and np.isfinite(self.f_max)):
            raise ConfigError(f"need 0 <= f_min < f_max, got [{self.f_min}, {self.f_max}]")


def pair_breaking_frequency(delta_uev: float) -> float:
    """Threshold ``2 Delta / h`` in Hz for a gap given in micro-eV."""
    if not delta_uev > 0:
        raise ConfigError(f"delta must be positive, got {delta_uev}")
    return 2.0 * delta_uev * 1e-6 * constants.e / constants.h


def junction_impedance(params: RcsjParams, f):
    """RCSJ impedance ``1 / (1/R_n + i 2 pi f C_j)`` in ohm."""
    f = np.asarray(f, dtype=float)
    if np.any(f <= 0):
        raise ConfigError("junction impedance needs f > 0")
    z = 1.0 / (1.0 / params.r_n + 2j * np.pi * f * params.c_j)
    return complex(z) if z.ndim == 0 else z


def coupling_efficiency(z_rad, z_j):
    """Power coupling efficiency between a source `z_rad` and a load `z_j`.

    Evaluated in the form ``4 Re Z_rad Re Z_j / |Z_rad + Z_j|^2``, which is
    algebraically equal to the reflection form but keeps full relative
    precision near total mismatch.
    """
    zr = np.asarray(z_rad, dtype=complex)
    zj = np.asarray(z_j, dtype=complex)
    if np.any(zr.real < 0):
        raise ConfigError("Re(z_rad) must be non-negative")
    if np.any(zj.real <= 0):
        raise ConfigError("Re(z_j) must be positive")
    denom = np.abs(zr + zj) ** 2
    if np.any(denom == 0):
        raise SingularInputError("z_rad + z_j = 0; coupling efficiency is undefined")
    e = np.minimum(4.0 * zr.real * zj.real / denom, 1.0)
    return float(e) if e.ndim == 0 else e


def efficiency_curve(table: ImpedanceTable, rcsj: RcsjParams) -> EfficiencyCurve:
    """e_c at each tabulated frequency for the given junction."""
    e = coupling_efficiency(table.z, junction_impedance(rcsj, table.freqs))
    return EfficiencyCurve(table.freqs, np.atleast_1d(e), table.source_label)


def bose_occupation(f, t):
    """Mean photon number ``1 / (exp(hf/kT) - 1)``, underflowing cleanly to 0."""
    x = H_OVER_K * np.asarray(f, dtype=float) / t
    return np.exp(-x) / -np.expm1(-x)


def band_integrated_efficiency(curve: EfficiencyCurve, f_min: float, f_max: float) -> float:
    """Exact integral of the interpolated e_c over ``[f_min, f_max]`` (Hz)."""
    curve.check_covers(f_min, f_max)
    inner = curve.freqs[(curve.freqs > f_min) & (curve.freqs < f_max)]
    x = np.concatenate([[f_min], inner, [f_max]])
    return float(np.trapezoid(curve(x), x))


def _as_curve(e_c_table) -> EfficiencyCurve:
    if isinstance(e_c_table, EfficiencyCurve):
        return e_c_table
    try:
        table, rcsj = e_c_table
    except (TypeError, ValueError):
        raise ConfigError(
            "expected an EfficiencyCurve or an (ImpedanceTable, RcsjParams) pair"
        ) from None
    return efficiency_curve(table, rcsj)


def _photon_flux(curve: EfficiencyCurve, t: float, f_min: float, f_max: float, rtol: float) -> float:
    # composite Gauss-Legendre on every interpolation segment; integrand is
    # smooth inside a segment, so uniform refinement converges geometrically
    inner = curve.freqs[(curve.freqs > f_min) & (curve.freqs < f_max)]
    edges = np.concatenate([[f_min], inner, [f_max]])
    a, width = edges[:-1], np.diff(edges)
    previous = None
    m = 1
    while m <= 1 << 16:
        offs = (np.arange(m)[:, None] + _GL_X[None, :]).ravel() / m
        nodes = a[:, None] + width[:, None] * offs[None, :]
        vals = curve(nodes) * bose_occupation(nodes, t)
        total = float(np.sum(vals * np.tile(_GL_W / m, m)[None, :] * width[:, None]))
        if previous is not None and abs(total - previous) <= rtol * abs(total):
            return total
        if total == 0.0 and previous == 0.0:
            return 0.0
        previous = total
        m *= 2
    raise ConvergenceError(f"blackbody quadrature did not reach rtol={rtol} at T*={t} K")


def parity_rate_from_blackbody(
    e_c_table, source: BlackbodySource, efficiency_scale: float = 1.0, *, rtol: float = 1e-8
) -> float:
    """Parity switching rate (1/s) from blackbody photons absorbed at the junction.

    Parameters
    ----------
    e_c_table : EfficiencyCurve or (ImpedanceTable, RcsjParams)
        Coupling efficiency, either precomputed or built from an impedance table.
    source : BlackbodySource
        Temperature and integration band.
    efficiency_scale : float
        Parity flips per absorbed photon, in (0, 1].
    rtol : float
        Relative tolerance of the quadrature.

    Raises
    ------
    CoverageError
        If the efficiency curve does not span the band.
    """
    if not 0 < efficiency_scale <= 1:
        raise ConfigError(f"efficiency_scale must be in (0, 1], got {efficiency_scale}")
    curve = _as_curve(e_c_table)
    curve.check_covers(source.f_min, source.f_max)
    return efficiency_scale * _photon_flux(curve, source.t_star, source.f_min, source.f_max, rtol)


def rate_vs_temperature(e_c_table, temps, f_min: float, f_max: float = 400e9, efficiency_scale: float = 1.0):
    """Parity rate at each temperature in `temps` (K)."""
    curve = _as_curve(e_c_table)
    return np.array(
        [
            parity_rate_from_blackbody(curve, BlackbodySource(t, f_min, f_max), efficiency_scale)
            for t in np.asarray(temps, dtype=float)
        ]
    )


def invert_t_star(
    target_rate: float,
    e_c_table,
    f_min: float,
    f_max: float = 400e9,
    efficiency_scale: float = 1.0,
    *,
    bracket=(0.01, 10.0),
    xtol: float = 1e-9,
) -> float:
    """Effective temperature (K) at which the blackbody model gives `target_rate`.

    Brent's method on ``Gamma(T) - target`` inside `bracket`; `xtol` is in
    kelvin. Raises `BracketError` with the rates at both ends if the target
    is outside what the bracket can reach.
    """
    if not target_rate > 0:
        raise ConfigError(f"target rate must be positive, got {target_rate}")
    curve = _as_curve(e_c_table)
    lo, hi = bracket

    def excess(t):
        return parity_rate_from_blackbody(curve, BlackbodySource(t, f_min, f_max), efficiency_scale) - target_rate

    g_lo, g_hi = excess(lo) + target_rate, excess(hi) + target_rate
    if not g_lo <= target_rate <= g_hi:
        raise BracketError(
            f"target rate {target_rate:.6g} 1/s is outside [{g_lo:.6g}, {g_hi:.6g}] 1/s "
            f"reached for T* in [{lo}, {hi}] K"
        )
    return float(brentq(excess, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps))


def resonant_impedance(freqs, r_peak: float, f0: float, q: float, label: str = "") -> ImpedanceTable:
    """Toy antenna: parallel RLC ``R / (1 + i Q (f/f0 - f0/f))``.

    Used to build the synthetic example tables; not a model of any real
    device geometry.
    """
    if not (r_peak > 0 and f0 > 0 and q > 0):
        raise ConfigError("r_peak, f0 and q must be positive")
    f = np.asarray(freqs, dtype=float)
    z = r_peak / (1.0 + 1j * q * (f / f0 - f0 / f))
    return ImpedanceTable(f, z.real, z.imag, label)


# Parameters of the shipped synthetic tables. The x-mon-like resonance is
# broad and centered at 150 GHz; the two-pads-like one is weaker and shifted
# so its band-integrated coupling is half as large against `SYNTHETIC_RCSJ`.
SYNTHETIC_RCSJ = RcsjParams(r_n=15e3, c_j=2e-15)
SYNTHETIC_GRID = np.linspace(50e9, 500e9, 451)
SYNTHETIC_MODELS = {
    "xmon_like": dict(r_peak=21.0, f0=150e9, q=1.0),
    "two_pads_like": dict(r_peak=9.1, f0=175e9, q=1.0),
}


def synthetic_table(name: str) -> ImpedanceTable:
    """Regenerate one of the shipped synthetic impedance tables by name."""
    try:
        model = SYNTHETIC_MODELS[name]
    except KeyError:
        raise ConfigError(f"unknown synthetic table {name!r}; choose from {sorted(SYNTHETIC_MODELS)}") from None
    return resonant_impedance(SYNTHETIC_GRID, label=f"synthetic {name}", **model)
