"""Exception types shared across the package.

All subclass ValueError so callers that do not care about the distinction
can catch a single builtin type.
"""


class FlowstyleError(ValueError):
    """Base class for all package errors."""


class DimensionError(FlowstyleError):
    """Array shapes or channel counts do not line up."""


class ConfigError(FlowstyleError):
    """A requested configuration is unsatisfiable (e.g. same-padding with an even kernel)."""


class DomainError(FlowstyleError):
    """A numeric argument is outside its valid domain."""


class InputError(FlowstyleError):
    """External input (files, datasets, CLI arguments) is malformed or missing."""


class EdgeUnavailableError(FlowstyleError):
    """Operation requested on a crashed edge node."""
