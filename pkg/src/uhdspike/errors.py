"""Exception types raised by the library."""


class SpikeModelError(Exception):
    """Base class for all library errors."""


class NonPositiveEigenvalue(SpikeModelError, ValueError):
    pass


class UnsortedInputRejected(SpikeModelError, ValueError):
    pass


class DimensionMismatch(SpikeModelError, ValueError):
    pass


class PoleProximity(SpikeModelError, ValueError):
    pass


class BracketFailure(SpikeModelError, RuntimeError):
    pass


class NonConvergence(SpikeModelError, RuntimeError):
    pass


class WrongBranch(SpikeModelError, RuntimeError):
    pass


class QuadratureFailure(SpikeModelError, RuntimeError):
    pass


class InadmissibleSpike(SpikeModelError, ValueError):
    pass


class WeightBoundViolation(SpikeModelError, ValueError):
    pass


class InvalidPhi(SpikeModelError, ValueError):
    pass


class Subcritical(SpikeModelError, ValueError):
    pass


class EigensolverFailure(SpikeModelError, RuntimeError):
    pass


class InsufficientGrid(SpikeModelError, ValueError):
    pass


class ConfigError(SpikeModelError, ValueError):
    pass
