"""Exception hierarchy.

Every error carries a ``category`` string so the command line can map it to
a machine-readable exit status.
"""


class MajorantError(Exception):
    category = "error"


class ConfigurationError(MajorantError, ValueError):
    category = "schema"


class KernelValidationError(MajorantError, ValueError):
    category = "kernel_validation"


class PreconditionError(MajorantError, ValueError):
    category = "precondition"


class DomainError(MajorantError, ValueError):
    category = "domain"


class GeometryError(PreconditionError):
    category = "geometry"


class ResourceBudgetError(MajorantError, RuntimeError):
    category = "resource_budget"


class OverflowGuardError(MajorantError, FloatingPointError):
    category = "overflow"
