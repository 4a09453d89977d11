"""Exception types raised across branchlab."""


class BranchlabError(Exception):
    """Base class for every error raised by this package."""


class SchemaError(BranchlabError, ValueError):
    """Malformed names, labels, kernels or configs."""


class CapacityError(BranchlabError):
    """A composite or acting dimension exceeds its configured cap."""


class LayoutMismatchError(BranchlabError, ValueError):
    """Operands live on different layouts."""


class PreconditionError(BranchlabError, ValueError):
    pass


class EmptyConditionalError(BranchlabError, ValueError):
    """Conditioning on an outcome that carries (numerically) zero weight."""
