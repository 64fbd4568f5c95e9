"""Exception hierarchy shared by all modules."""


class RilabError(Exception):
    """Base class for every error raised by this package."""


class DomainError(RilabError, ValueError):
    """Parameters or inputs outside the admissible domain."""


class OrderingViolation(RilabError):
    """Critical points violate the ordering -1 < V_-, V_4 < V_+ < V_* < 0."""


class DegenerateCriticalPoint(RilabError):
    """Discriminant vanishes; the node/saddle type is undefined."""


class BarrierExit(RilabError):
    """The traced trajectory left the barrier region through Pi_1 or Pi_2."""

    def __init__(self, message, location=None, report=None):
        super().__init__(message)
        self.location = location
        self.report = report


class NoNodeCapture(RilabError):
    """The traced trajectory was not captured by the node P9."""

    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


class BisectionStall(RilabError):
    """Bracketing departure directions failed to separate."""


class NonMonotone(RilabError):
    """Recovered similarity coordinate x is not strictly monotone."""


class KinkAtOrigin(RilabError):
    """Entry and exit slopes at P1 differ."""


class VacuumEncounter(RilabError):
    """C/x vanished somewhere along a branch (density would vanish)."""


class AtSingularity(RilabError):
    """Evaluation requested at the collapse point (t, r) = (0, 0)."""


class NotThroughOrigin(RilabError):
    """Branch does not pass through P1."""


class DivergentIntegral(RilabError):
    """Local mass/momentum/energy integrals diverge at r = 0."""


class SonicAhead(RilabError):
    """Ahead state is not supersonic relative to the similarity shock."""


class NoAdmissibleBranch(RilabError):
    """Only the trivial (identity) jump exists."""


class AtPole(RilabError):
    """Slope map evaluated at its pole."""


class InsufficientOverlap(RilabError):
    """Curves share too few matched levels for an intersection verdict."""
