"""Exception hierarchy shared by all qbgk modules."""


class QBGKError(Exception):
    """Base class for every error raised by this package."""


class DomainError(QBGKError, ValueError):
    """An argument lies outside the domain where the quantity is defined."""


class RangeError(QBGKError, ValueError):
    """An inverse was requested for a value the forward map never attains."""


class ConvergenceError(QBGKError, RuntimeError):
    """An iterative procedure hit its iteration cap or stalled."""


class QuadratureError(ConvergenceError):
    """A radial integral did not reach the requested relative accuracy."""


class InfeasibleError(QBGKError, ValueError):
    """Moment data admit no quantum equilibrium.

    ``reason`` is a short machine-readable phrase, ``relation`` names the
    violated condition (if any) and ``context`` carries extra location data
    such as the spatial cell and species index.
    """

    def __init__(self, reason, relation=None, **context):
        self.reason = reason
        self.relation = relation
        self.context = context
        msg = reason
        if relation:
            msg = f"{msg} ({relation})"
        if context:
            extras = ", ".join(f"{k}={v}" for k, v in sorted(context.items()))
            msg = f"{msg} [{extras}]"
        super().__init__(msg)


class BoundViolationError(QBGKError, RuntimeError):
    """An occupancy left its admissible range (negative, or >= 1 for fermions)."""


class CFLError(QBGKError, ValueError):
    """The transport step would exceed unit Courant number."""
