"""Exception types shared across the package.

Plain ``ValueError`` is used for bad arguments (dimension mismatches,
out-of-range parameters); the classes below mark failure categories that
the CLI maps to distinct exit codes.
"""


class RisceError(Exception):
    """Base class for package-specific failures."""


class ConfigError(RisceError):
    """Invalid or inconsistent experiment configuration."""


class DataError(RisceError):
    """Missing or degenerate data, including missing trained artifacts."""


class FormatError(RisceError):
    """Malformed binary artifact (bad magic, truncation, bad header)."""


class NumericError(RisceError):
    """Numerical failure (factorization breakdown, non-finite values)."""


class TrainingError(NumericError):
    """Divergence or numerical breakdown during gradient training."""
