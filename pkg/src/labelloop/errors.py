"""Typed exceptions shared across the package."""


class LabelLoopError(Exception):
    """Base class for all package errors."""


class SchemaError(LabelLoopError):
    """Input file does not match its declared schema (missing column, bad row)."""


class EmptyPoolError(LabelLoopError):
    """A data file parsed to zero usable instances."""


class LabelDomainError(LabelLoopError):
    """A label value falls outside the declared label space."""


class PoolSizeError(LabelLoopError):
    """A request asked for more instances than are available."""


class ConfigError(LabelLoopError):
    """A configuration violates one of its invariants."""


class TransportError(LabelLoopError):
    """Network-level failure talking to an LLM endpoint (retryable)."""

    def __init__(self, message: str, attempts: int = 1):
        super().__init__(message)
        self.attempts = attempts


class EmptyResponseError(LabelLoopError):
    """The endpoint answered with an empty body or an outright refusal."""


class ScriptExhaustedError(LabelLoopError):
    """A scripted mock endpoint ran out of canned responses."""


class PartialFillError(LabelLoopError):
    """Top-up could not reach the requested count."""

    def __init__(self, message: str, shortfall: int):
        super().__init__(message)
        self.shortfall = shortfall


class PoolExhausted(LabelLoopError):
    """No further instances can be presented; the session is over."""


class BudgetExhausted(LabelLoopError):
    """The session already holds as many labels as its budget allows."""


class OpenTaskError(LabelLoopError):
    """An annotation task is already open (or none is, when one is required)."""


class StateIntegrityError(LabelLoopError):
    """A persisted state file failed its integrity hash."""


class StateVersionError(LabelLoopError):
    """A persisted state file uses an unsupported schema version."""


class SimulationError(LabelLoopError):
    """The simulated oracle was asked about an instance without a gold label."""


class ShapeError(LabelLoopError):
    """Mismatched lengths or dimensions between paired inputs."""


class ValidationError(LabelLoopError):
    """A numeric input violates its contract (e.g. non-normalized probabilities)."""


class DomainError(LabelLoopError):
    """An operation was applied outside its mathematical domain."""
