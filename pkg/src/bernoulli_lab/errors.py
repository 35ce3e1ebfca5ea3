"""Exception hierarchy shared by all modules."""


class LabError(Exception):
    """Base class for every error raised by this package."""


# problem constants
class NonPositiveLambda(LabError, ValueError):
    pass


class DegenerateData(LabError, ValueError):
    pass


class TwoPhaseOrderError(LabError, ValueError):
    pass


class GammaAbsent(LabError):
    """The constants admit no homogeneous free boundary (gamma undefined)."""


class OnFreeBoundary(LabError, ValueError):
    pass


class BadConeParam(LabError, ValueError):
    pass


# mesh
class BudgetExceeded(LabError):
    pass


class TraceMismatch(LabError, ValueError):
    pass


class UnalignedRadius(LabError, ValueError):
    pass


class RegionUnaligned(UnalignedRadius):
    pass


class MeshMismatch(LabError, ValueError):
    pass


# functional / solver
class GNotSet(LabError, ValueError):
    pass


class SingularSystem(LabError):
    pass


class NotConverged(LabError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class InconsistentBoundary(LabError, ValueError):
    pass


# free boundary diagnostics
class CurveTooShort(LabError):
    pass


class RadiiUnaligned(UnalignedRadius):
    pass


class CenterOutside(LabError, ValueError):
    pass


class NoPointsInAnnulus(LabError):
    pass


# blow-up
class UnalignedScale(UnalignedRadius):
    pass


class TooFewScales(LabError, ValueError):
    pass


class EmptyInAnnulus(LabError):
    pass


class NoCrossing(LabError):
    pass


class ConfigError(LabError, ValueError):
    pass
