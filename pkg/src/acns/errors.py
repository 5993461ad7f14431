"""Exception hierarchy shared by all acns modules."""


class ACNSError(Exception):
    """Base class for every error raised by acns."""


# geometry
class ObstacleTouchesBox(ACNSError, ValueError):
    pass


class EmptyFluidRegion(ACNSError, ValueError):
    pass


# fields
class GeometryMismatch(ACNSError, ValueError):
    pass


class BadExponent(ACNSError, ValueError):
    pass


class EmptySeries(ACNSError, ValueError):
    pass


class BasisMismatch(ACNSError, ValueError):
    pass


class InsufficientRank(ACNSError, ValueError):
    pass


class AlphaOutOfRange(ACNSError, ValueError):
    pass


# elliptic
class IncompatibleRHS(ACNSError, ValueError):
    pass


class NoConvergence(ACNSError, RuntimeError):
    def __init__(self, iterations, residual, message=None):
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            message or f"no convergence after {iterations} iterations (residual {residual:.3e})"
        )


class RankTooLarge(ACNSError, ValueError):
    pass


# time stepping
class BadInitialData(ACNSError, ValueError):
    pass


class Blowup(ACNSError, RuntimeError):
    def __init__(self, message, step=None):
        self.step = step
        super().__init__(message if step is None else f"step {step}: {message}")


class CFLViolation(ACNSError, ValueError):
    pass


# post-processing
class NonuniformCadence(ACNSError, ValueError):
    pass


class InsufficientSnapshots(ACNSError, ValueError):
    pass


class OffsetTooLarge(ACNSError, ValueError):
    pass


class DegeneratePoints(ACNSError, ValueError):
    pass


class GridMismatch(ACNSError, ValueError):
    pass


# io / cli
class CorruptSnapshot(ACNSError, ValueError):
    def __init__(self, path, reason):
        self.path = str(path)
        super().__init__(f"{path}: {reason}")


class ConfigError(ACNSError, ValueError):
    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}".strip())


class PreconditionError(ACNSError, ValueError):
    pass
