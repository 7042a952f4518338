"""Exception types raised across the simulator."""


class LeosemError(Exception):
    """Base class for all simulator errors."""


class BadConfig(LeosemError, ValueError):
    pass


class DisplacementTooFast(LeosemError, ValueError):
    pass


class AltitudeViolation(LeosemError, ValueError):
    pass


class NonPositiveDistance(LeosemError, ValueError):
    pass


class InvalidChoice(LeosemError, ValueError):
    pass


class ZeroRateHop(LeosemError, ValueError):
    pass


class BadWeights(LeosemError, ValueError):
    pass


class IllegalAction(LeosemError, ValueError):
    pass


class GroupTooSmall(LeosemError, ValueError):
    pass


class StaleTrajectories(LeosemError, RuntimeError):
    pass


class FullyMaskedHead(LeosemError, ValueError):
    pass


class IoFailure(LeosemError, OSError):
    pass
