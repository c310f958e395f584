class VianaLabError(Exception):
    """Base class for every error raised by the lab."""


class TruncationError(VianaLabError):
    """A point falls outside the retained branches of a truncated partition."""


class PreconditionError(VianaLabError):
    """An operation was called outside its domain."""


class StructureError(VianaLabError):
    """Two systems do not share the branch structure an operation needs."""


class BracketError(VianaLabError):
    """A root bracket has no sign change."""


class TrappingError(VianaLabError):
    """A trapping region could not be certified."""

    def __init__(self, message: str, slack: float | None = None):
        super().__init__(message)
        self.slack = slack


class NonHyperbolicError(VianaLabError):
    """The critical orbit of a fiber map does not settle on an attracting cycle."""


class RetuneError(VianaLabError):
    """A fiber bump cannot move the fiber parameter into a hyperbolic window."""


class ConfigError(VianaLabError):
    """The experiment configuration is unreadable or fails validation."""
