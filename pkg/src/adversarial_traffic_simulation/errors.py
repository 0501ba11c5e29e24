class AdvSimError(Exception):
    exit_code = 1


class ConfigurationError(AdvSimError):
    exit_code = 2


class DataError(AdvSimError):
    exit_code = 3


class SimulationRuntimeError(AdvSimError):
    exit_code = 4


class ScenarioParseError(DataError):
    def __init__(self, field: str, message: str):
        super().__init__(f"invalid scenario field '{field}': {message}")
        self.field = field


class ScenarioValidationError(DataError):
    """
    Raised from model validators. It is not a ValueError, so pydantic propagates it unchanged instead of wrapping it
    into a ValidationError.
    """

    def __init__(self, message: str, agent_id: str | None = None, timestamp: float | None = None):
        details = []
        if agent_id is not None:
            details.append(f"agent_id={agent_id}")
        if timestamp is not None:
            details.append(f"t={timestamp:.3f}")

        super().__init__(f"{message} ({', '.join(details)})" if details else message)
        self.agent_id = agent_id
        self.timestamp = timestamp


class EmptyHistoryError(DataError):
    pass


class InsufficientDataError(DataError):
    pass


class GridMismatchError(DataError):
    pass


class UnknownAgentError(DataError):
    def __init__(self, agent_id: str):
        super().__init__(f"unknown agent_id {agent_id}")
        self.agent_id = agent_id


class DegenerateCorpusError(DataError):
    pass


class EmptyCorpusError(DataError):
    pass


class UnmatchedResultError(DataError):
    pass


class TrackTooShortError(DataError):
    pass


class DegeneratePolylineError(DataError):
    pass


class NoOpponentError(SimulationRuntimeError):
    pass


class PathLostError(SimulationRuntimeError):
    pass


class EndOfLogError(SimulationRuntimeError):
    """Signals that the logged data ends; the engine turns it into a regular episode termination."""
