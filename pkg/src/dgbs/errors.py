"""Exception hierarchy shared across the package."""


class DgbsError(Exception):
    """Base class for all domain errors raised by this package."""


class ConfigurationError(DgbsError):
    """Invalid source/circuit configuration (e.g. overlapping input ports)."""


class PhysicalityError(DgbsError):
    """An object violates a physicality constraint (non-sub-unitary transfer
    matrix, covariance not positive definite, ...)."""


class NumericalError(DgbsError):
    """A computation cannot be carried out reliably (ill-conditioned solve)."""


class EnumerationBudgetError(DgbsError):
    """A pattern/matching enumeration would exceed the configured budget."""


class CutoffError(DgbsError):
    """Fock-space truncation loses more probability mass than allowed."""


class SchemaError(DgbsError):
    """A config or data file does not match the expected schema."""
