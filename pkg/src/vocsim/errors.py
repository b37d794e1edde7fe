"""Exception hierarchy shared by all vocsim modules."""


class VocError(Exception):
    """Base class for every error raised by vocsim."""


class LienardViolation(VocError, ValueError):
    """Oscillator damping at the origin is not positive, so no stable limit cycle exists."""


class DegenerateRadius(VocError, ValueError):
    """Polar coordinates requested at (or numerically at) the origin."""


class DisconnectedNetwork(VocError, ValueError):
    pass


class SingularInterior(VocError, ValueError):
    pass


class NumericalBlowup(VocError, ArithmeticError):
    """A trajectory became non-finite. ``time`` records when it was detected."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class WindowError(VocError, ValueError):
    pass


class OverloadError(VocError, ValueError):
    """Requested power exceeds what an oscillator can deliver at any real amplitude."""


class NoEquilibriumFound(VocError, RuntimeError):
    pass


class SingularCorrespondence(VocError, ZeroDivisionError):
    """Voltage-droop coefficient is undefined because dP/dr vanishes."""


class ConfigError(VocError, ValueError):
    """Scenario file failed validation. ``path`` is the offending field path."""

    def __init__(self, message, path=""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
