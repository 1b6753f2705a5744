"""Exception types shared across the toolkit."""


class HetnetError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(HetnetError):
    """Invalid or malformed configuration."""


class CoverageError(HetnetError):
    """A user location cannot be served by any base station."""

    def __init__(self, location_id: int, message: str | None = None):
        self.location_id = location_id
        super().__init__(message or f"location {location_id} has no covering base station")


class UnstableQueueError(HetnetError):
    """A queue is at or above load one; delays are undefined."""

    def __init__(self, queue_id: int, rho: float):
        self.queue_id = queue_id
        self.rho = rho
        super().__init__(f"queue {queue_id} is unstable (rho={rho:.6g} >= 1)")


class InfeasibleRateError(HetnetError):
    """No association keeps every queue within the load cap at this arrival rate."""


class SolverBudgetError(HetnetError):
    """A solver exhausted its node or time budget before meeting its guarantee."""
