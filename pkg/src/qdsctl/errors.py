"""Exception hierarchy shared by all qdsctl modules."""


class QdsError(Exception):
    """Base class for every error raised by qdsctl."""


class DimensionError(QdsError, ValueError):
    pass


class StateError(QdsError, ValueError):
    """A matrix failed the density-operator invariants."""


class NotPositive(QdsError, ValueError):
    pass


class NoStationaryState(QdsError):
    def __init__(self, message, kernel=None):
        super().__init__(message)
        self.kernel = kernel


class ModeError(QdsError, ValueError):
    pass


class InternalInconsistency(QdsError, RuntimeError):
    """Two equivalent characterizations disagreed; always a bug, never a model property."""


class DecompositionError(QdsError, ValueError):
    pass


class InvarianceError(QdsError, ValueError):
    pass


class StateInvariantViolation(QdsError, RuntimeError):
    def __init__(self, message, time=None, min_eigenvalue=None):
        super().__init__(message)
        self.time = time
        self.min_eigenvalue = min_eigenvalue


class GridMismatch(QdsError, ValueError):
    pass


class NotPure(QdsError, ValueError):
    pass


class NotStabilizable(QdsError, ValueError):
    def __init__(self, message, residual=0.0):
        super().__init__(message)
        self.residual = residual


class ZeroCoupling(QdsError, ValueError):
    pass


class NotCompensable(QdsError, ValueError):
    def __init__(self, message, residual=0.0):
        super().__init__(message)
        self.residual = residual
