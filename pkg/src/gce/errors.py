"""Error categories shared across the toolkit.

The CLI maps these onto exit codes (config 2, numeric 3, data 4);
library code raises them directly.
"""


class GceError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(GceError):
    """Invalid configuration: missing paths, malformed flags or config files."""


class DataError(GceError):
    """Invalid or inconsistent data: parse failures, bad labels, empty groups."""


class NumericError(GceError):
    """Numerical failure: divergence, non-finite values, evaluator breakdown."""
