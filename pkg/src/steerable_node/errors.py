"""Exception hierarchy shared by every module of the package."""


class SteerableError(Exception):
    """Base class for all errors raised by steerable_node."""


class SpecMismatch(SteerableError, ValueError):
    """Operands belong to different groups or base spaces."""


class BranchCut(SteerableError, ValueError):
    """Logarithm requested outside the principal branch."""


class NoQuotientRegistered(SteerableError, KeyError):
    """No homogeneous-space structure is known for the requested pair."""


class OutsideChart(SteerableError, ValueError):
    """A base point lies in the excluded region of a local section."""


class NotInFibre(SteerableError, ValueError):
    """A group element expected in the stabiliser failed the membership test."""


class ShapeMismatch(SteerableError, ValueError):
    pass


class WangViolation(SteerableError, ValueError):
    """A linear map fails the conditions for an invariant connection."""


class LeftChartDomain(OutsideChart):
    """An integrated base trajectory entered the excluded region of the chart."""


class NotClosed(SteerableError, ValueError):
    pass


class DimMismatch(SteerableError, ValueError):
    pass


class ChartExhausted(SteerableError, RuntimeError):
    """Rejection sampling could not find inputs inside the chart."""


class UnsupportedGroup(SteerableError, ValueError):
    pass


class NormalizationDrift(SteerableError, RuntimeError):
    """Total probability mass drifted beyond tolerance."""


class Stalled(SteerableError, RuntimeError):
    pass


class Diverged(SteerableError, RuntimeError):
    pass
