"""Exception types shared across the package."""


class CentroplanError(Exception):
    """Base class for all package-specific errors."""


class ScenarioError(CentroplanError):
    """Raised when a scenario document fails validation.

    Carries the full list of violations so callers can report all of
    them at once instead of fixing one field at a time.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class ScheduleError(CentroplanError):
    """A query or construction is inconsistent with the contact schedule."""


class IntegrationError(CentroplanError):
    """Numerical integration hit a non-finite sample."""

    def __init__(self, message, t=None):
        self.t = t
        super().__init__(message)


class SolverDivergedError(CentroplanError):
    """The constrained solver produced a non-finite objective."""

    def __init__(self, message, last_iterate=None):
        self.last_iterate = last_iterate
        super().__init__(message)


class SimulationDivergedError(CentroplanError):
    """Closed-loop state left the configured divergence bound."""

    def __init__(self, message, partial_log=None):
        self.partial_log = partial_log
        super().__init__(message)
