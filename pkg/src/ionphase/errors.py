"""Exception and warning types raised across the package."""


class IonPhaseError(Exception):
    """Base class for all package errors."""


class TruncationError(IonPhaseError):
    """The truncated Fock basis is too small for the requested accuracy."""


class StepSizeError(IonPhaseError):
    """Halving the integration step changed the result beyond tolerance."""


class PreconditionError(IonPhaseError, ValueError):
    """Input data violates the documented precondition of an operation."""


class FitError(IonPhaseError):
    """Base class for estimation failures."""


class NonConvergence(FitError):
    pass


class DegenerateData(FitError):
    """Measurement record carries no information (e.g. constant signal)."""


class Unidentifiable(FitError):
    """The model parameters cannot be recovered from the data (flat fringe)."""


class UnwrapAmbiguity(FitError):
    pass


class ConfigError(IonPhaseError, ValueError):
    pass


class RecordFormatError(IonPhaseError, ValueError):
    """A serialized measurement record or fit result could not be parsed."""


class TruncationWarning(UserWarning):
    pass


class DegenerateDetuning(UserWarning):
    """Zero drive detuning; the resonant limit of the displacement is used."""
