"""Exception hierarchy shared by every module."""


class ResparsError(Exception):
    """Base class for all library errors."""


class ParseError(ResparsError, ValueError):
    pass


class ZeroDegreeError(ResparsError, ValueError):
    pass


class NotSymmetricError(ResparsError, ValueError):
    pass


class InconsistentRHSError(ResparsError, ValueError):
    pass


class ConvergenceError(ResparsError, RuntimeError):
    """CG ran out of iterations; ``residual`` holds the final relative residual."""

    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


class StaleCacheError(ResparsError):
    pass


class CacheFormatError(ResparsError, ValueError):
    pass


class ShapeError(ResparsError, ValueError):
    pass
