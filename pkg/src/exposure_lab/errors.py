"""Exception hierarchy shared across the pipeline.

Each class maps to one CLI exit code so stage failures are
distinguishable in batch runs."""


class ExposureLabError(Exception):
    """Base class for all pipeline errors."""

    exit_code = 1


class ConfigError(ExposureLabError):
    """Invalid or incomplete run configuration."""

    exit_code = 2


class DataError(ExposureLabError):
    """Malformed, inconsistent, or referentially broken input data."""

    exit_code = 3


class NumericalError(ExposureLabError):
    """Numerical failure: rank deficiency, non-convergence, zero variance."""

    exit_code = 4
