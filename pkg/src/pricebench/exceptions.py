"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes, so raise the most specific
class that applies: ConfigError for bad configuration, DataError for
unusable input data, NumericError for numerical failures (divergence,
non-finite values, singular fits).
"""


class PricebenchError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(PricebenchError):
    """Invalid or inconsistent run configuration."""


class DataError(PricebenchError):
    """Input data cannot be parsed or fails validation preconditions."""


class NumericError(PricebenchError):
    """A numerical procedure diverged or produced non-finite values."""
