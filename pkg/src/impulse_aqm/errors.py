"""Exception hierarchy shared by the solver, simulator and CLI."""


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class ParameterError(ValueError):
    """Model or criterion parameters violate a precondition."""


class UnsupportedParameterError(ParameterError):
    """Parameters are valid in general but not handled by this solver."""


class AlphaOneError(UnsupportedParameterError):
    """alpha == 1 (logarithmic utility) is rejected rather than approximated."""


class ZeroPriceError(ParameterError):
    """A positive link price is required for a finite threshold."""


class DegenerateExponentError(ParameterError):
    """2 - alpha - gamma == 0 makes the threshold formula singular."""


class ValidationError(ValueError):
    """Malformed network, policy or simulation configuration."""


class NumericError(ArithmeticError):
    """A numerical procedure failed to reach its tolerance."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class NoRootError(NumericError):
    """No sign change of the free-boundary function was found."""


class AmbiguousRootError(NumericError):
    """More than one +/- sign change was found where theory predicts one."""
