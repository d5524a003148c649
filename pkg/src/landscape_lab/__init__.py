"""Last-passage simulations of Busemann instability, stability islands and shocks."""

from .environment import EnvironmentField, Kind, SitePoint, gen_environment, load_environment
from .errors import (CapabilityError, ConfigError, DomainError, InconsistencyError, LandscapeError, ParameterError,
                     TruncationError)

__all__ = [
    "CapabilityError", "ConfigError", "DomainError", "EnvironmentField", "InconsistencyError", "Kind",
    "LandscapeError", "ParameterError", "SitePoint", "TruncationError", "gen_environment", "load_environment",
]
