"""Exception hierarchy shared by all toolkit modules.

Every operational failure derives from ToolError and carries the process
exit code the CLI maps it to (2 for domain/validation problems, 3 for
resource exhaustion).
"""


class ToolError(Exception):
    exit_code = 2


class DomainError(ToolError):
    """Arguments violate a documented precondition."""


class RangeError(DomainError):
    """Arguments exceed what the available tables can answer."""


class ResourceError(ToolError):
    """The request would exceed a configured memory or work budget."""

    exit_code = 3


class AccuracyError(ToolError):
    """A numerical target tolerance could not be met."""


class ConstructionError(ToolError):
    """A derived object failed one of its defining conditions."""
