"""Exception classes, grouped by the failure classes the CLI reports."""


class ResistographError(Exception):
    """Base class for all package errors."""


class ConfigError(ResistographError):
    """Malformed or inconsistent run configuration."""


class DataError(ResistographError):
    """Malformed input data: rasters, dissimilarity tables, grids."""


class SolverError(ResistographError):
    """Linear solver failed to meet its tolerance.

    Attributes
    ----------
    residual : float or None
        Relative residual achieved when the solve was abandoned.
    node : int or None
        Sample-node index of the failing right-hand side, if known.
    """

    def __init__(self, message, residual=None, node=None):
        super().__init__(message)
        self.residual = residual
        self.node = node


class NumericError(ResistographError):
    """Non-finite values encountered during optimization."""
