"""Exception types shared across the package."""


class ErgDelayError(Exception):
    """Base class for all package-specific errors."""


class NoEquilibriumError(ErgDelayError):
    """No steady state matching the requested output could be found."""


class InsufficientSpanError(ErgDelayError):
    """A history segment does not cover the time window an evaluation needs."""


class HistoryUnderrunError(ErgDelayError):
    """A delayed lookup would reach before the start of the stored history."""


class InfeasibleError(ErgDelayError):
    """Certificate search exhausted its budget without a feasible point.

    This is not a proof of infeasibility; the search is derivative free and
    may miss thin feasible regions.
    """


class ReferenceNotStrictlyAdmissibleError(ErgDelayError):
    """A reference's steady state sits on or outside the constraint boundary."""


class DegenerateConstraintError(ErgDelayError):
    """Every constraint row is invisible to the closed loop state."""


class InitialMarginViolatedError(ErgDelayError):
    """The governed run starts with a negative safety margin."""


class ScenarioError(ErgDelayError):
    """A scenario file is malformed or semantically invalid."""
