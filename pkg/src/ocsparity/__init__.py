"""Charge-parity switching toolkit for offset-charge-sensitive transmons.

Modules
-------
transmon   charge-basis spectrum and parity-split dispersion
telegraph  telegraph simulation, Welch spectra, Lorentzian rate fits
protocol   Bloch-level parity-mapping sequence
qp         Rothwarf-Taylor dynamics and trapping-rate fits
antenna    junction coupling efficiency and blackbody parity rates
cli        command-line pipelines
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    BracketError,
    ConfigError,
    ConvergenceError,
    CoverageError,
    DegenerateInputError,
    NumericalError,
    OcsParityError,
    SingularInputError,
)

__all__ = [
    "__version__",
    "BracketError",
    "ConfigError",
    "ConvergenceError",
    "CoverageError",
    "DegenerateInputError",
    "NumericalError",
    "OcsParityError",
    "SingularInputError",
]
