"""Exception types raised across the package."""


class ValidationError(ValueError):
    """An operator or state failed a physical validity check."""


class ConvergenceError(RuntimeError):
    """A truncated numerical representation did not converge."""


class ShapeMismatchError(ValueError):
    """A curve does not have the shape a given fitting law expects."""


class ManifestError(ValueError):
    """A run manifest is malformed or contains out-of-range values."""


class RankDeficiencyError(ValueError):
    """A scaling fit's design does not determine all of its parameters."""
