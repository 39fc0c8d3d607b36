"""Exception types shared by the antijam modules."""


class AntijamError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(AntijamError, ValueError):
    pass


class InvalidStateError(AntijamError, ValueError):
    """A density matrix or parameter triple is not a physical state."""


class CorruptedStateError(AntijamError):
    """An expectation value that must be real came out complex."""


class DegenerateChannelError(AntijamError, ZeroDivisionError):
    pass


class UndefinedThresholdError(AntijamError):
    pass


class InfeasibleLevelError(AntijamError):
    """No intruder scenario reaches the requested jamming level."""


class DegenerateRegionError(AntijamError):
    pass
