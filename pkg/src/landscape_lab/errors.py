"""Typed errors shared across the package."""


class LandscapeError(Exception):
    """Base class for all package errors."""


class ParameterError(LandscapeError, ValueError):
    """Invalid or inconsistent input parameters."""


class DomainError(LandscapeError, ValueError):
    """Input is well formed but outside the operation's domain."""


class CapabilityError(LandscapeError):
    """The requested feature is not available on this backend."""


class InconsistencyError(LandscapeError):
    """An invariant that must hold by construction was violated."""


class TruncationError(LandscapeError):
    """A traced object left the simulated window."""


class ConfigError(ParameterError):
    """Invalid configuration; ``problems`` lists every offending key."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))
