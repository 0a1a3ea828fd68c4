"""Exception hierarchy shared by every module of the package."""


class WsnError(Exception):
    """Base class for all package errors."""


class ConfigError(WsnError):
    """Invalid configuration. ``field`` names the offending config path."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


# trace
class ParseError(WsnError):
    def __init__(self, line: int, message: str = "unparseable row"):
        super().__init__(f"line {line}: {message}")
        self.line = line


class EmptyTrace(WsnError):
    pass


class InvalidSpec(WsnError):
    pass


# forecast
class EmptyHistory(WsnError):
    pass


class InsufficientData(WsnError):
    pass


class DivergedTraining(WsnError):
    pass


class LengthMismatch(WsnError):
    pass


# protocol
class ValueOverflow(WsnError):
    pass


class TruncatedPacket(WsnError):
    pass


class BadTypeTag(WsnError):
    pass


class ProtocolViolation(WsnError):
    pass


# sim
class SimulationError(WsnError):
    """Base for errors raised while a run is in progress."""


class TraceTooShort(SimulationError):
    pass


class ForecastDiverged(SimulationError):
    pass
