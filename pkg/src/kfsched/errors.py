"""Exception types raised by kfsched."""


class KFSchedError(Exception):
    """Base class for all package errors."""


class InstanceGenerationError(KFSchedError):
    """Random instance generation could not produce a usable system."""


class CovarianceError(KFSchedError):
    """The assembled measurement covariance is not positive definite."""


class UnsupportedConstraintError(KFSchedError):
    """An algorithm was handed a constraint family it cannot handle."""


class EnumerationCapExceeded(KFSchedError):
    """The feasible set is larger than the brute-force enumeration cap."""

    def __init__(self, count: int, cap: int):
        super().__init__(f"feasible set has more than {cap} schedules (counted {count})")
        self.count = count
        self.cap = cap
