"""Key-frame video stylization: full stylizer for key frames, optical-flow
warping for the rest, plus a federated-averaging simulator and metrics."""

from .errors import (
    ConfigError,
    DimensionError,
    DomainError,
    EdgeUnavailableError,
    FlowstyleError,
    InputError,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DimensionError",
    "DomainError",
    "EdgeUnavailableError",
    "FlowstyleError",
    "InputError",
    "__version__",
]
