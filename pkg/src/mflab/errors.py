"""Exception types shared across the package.

The harness maps these onto process exit codes (config 2, cap 3, numerics 4).
"""


class ConfigError(ValueError):
    """Invalid or unknown configuration input."""


class CapError(ValueError):
    """A requested size exceeds a module cap (basis size, tree order, ...)."""


class NumericalError(RuntimeError):
    """A numerical procedure failed to reach its tolerance."""
