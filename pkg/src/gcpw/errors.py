"""Exception hierarchy shared across the package."""


class GCPWError(Exception):
    """Base class for all errors raised by gcpw."""


class DegenerateInputError(GCPWError):
    """Input geometry or data cannot support the requested computation."""


class SchemaError(GCPWError, ValueError):
    """A file or config does not match its documented layout."""


class SolverError(GCPWError):
    """The linear solver hit non-finite values."""
