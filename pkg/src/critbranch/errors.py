"""Exception hierarchy shared by all modules."""


class CritBranchError(Exception):
    """Base class for package errors."""


class DomainError(CritBranchError, ValueError):
    """An argument lies outside the domain of the evaluated function."""


class ConfigError(CritBranchError, ValueError):
    """Invalid model or run configuration."""


class UnsupportedFamilyError(CritBranchError, NotImplementedError):
    """The requested operation is only implemented for a narrower family."""


class SingularityError(CritBranchError, ZeroDivisionError):
    """Evaluation at a point where the function is singular."""


class NumericalError(CritBranchError, ArithmeticError):
    """A numerical method failed to reach its tolerance."""


class DegenerateError(CritBranchError, ArithmeticError):
    """A conditional quantity was requested on a null event."""


class UnavailableConstantError(CritBranchError, ValueError):
    """A limit law needs a constant (such as ``Q`` or ``R``) that is infinite."""


class VerificationError(CritBranchError):
    """A Monte Carlo comparison was inconclusive or failed."""


class InsufficientSurvivorsError(VerificationError, ValueError):
    """Too few surviving replicates for a conditional estimate."""
