"""Exception types raised across the package."""


class LieFlowError(Exception):
    """Base class for all package errors."""


class RangeError(LieFlowError, ValueError):
    """Input outside the supported numeric range (e.g. exp overflow guard)."""


class CutLocusError(LieFlowError, ValueError):
    """Logarithm requested at (or numerically at) the cut locus."""


class DomainError(LieFlowError, ValueError):
    """Input outside the principal-branch domain of a map."""


class SingularityError(LieFlowError, ValueError):
    """Matrix is (numerically) singular."""


class ContractError(LieFlowError, ValueError):
    """Shapes or group specs of the arguments do not agree."""


class DivergenceError(LieFlowError, FloatingPointError):
    """Training produced a non-finite loss."""

    def __init__(self, message, batch_index=None):
        super().__init__(message)
        self.batch_index = batch_index


class GenerationError(LieFlowError, FloatingPointError):
    """Sampling produced a non-finite network output."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class FormatError(LieFlowError, ValueError):
    """Malformed or incompatible serialized artifact."""


class ConfigError(LieFlowError, ValueError):
    """Invalid run configuration."""
