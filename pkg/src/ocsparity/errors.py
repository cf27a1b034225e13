"""Exception hierarchy shared by all ocsparity modules.

`ConfigError` covers bad user input (CLI exit code 2); everything derived from
`NumericalError` is a data or numerics failure (exit code 3).
"""


class OcsParityError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(OcsParityError, ValueError):
    """Invalid configuration or input parameters."""


class NumericalError(OcsParityError):
    """A numerical routine could not produce a trustworthy result."""


class ConvergenceError(NumericalError):
    """Iterative routine failed to converge."""


class BracketError(NumericalError):
    """Root bracket does not contain a sign change."""


class DegenerateInputError(NumericalError):
    """Input data carries no information for the requested operation."""


class CoverageError(NumericalError):
    """Tabulated data does not cover the requested interval."""


class SingularInputError(NumericalError):
    """Input makes a formula divide by zero."""
