"""Exception types shared across the package."""


class VupropError(Exception):
    """Base class for all package errors."""


class GridError(VupropError):
    """Invalid grid specification or out-of-range index."""


class ExpressionError(VupropError):
    """Lexer or parser failure; carries the offending position."""

    def __init__(self, message, position=None):
        super().__init__(message if position is None else f"{message} (at position {position})")
        self.position = position


class EvaluationError(VupropError):
    """Model produced a non-finite value or was called with bad arity."""


class DegenerateDistributionError(VupropError):
    """All probability mass underflowed to zero on the grid."""


class NoSupportError(VupropError):
    """Queried a posterior row with zero output probability."""


class SidecarFormatError(VupropError):
    """Model-matrix sidecar file is corrupt or mismatched."""


class ConfigError(VupropError):
    """Run-config validation failure; message is path-qualified."""
