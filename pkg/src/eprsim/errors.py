"""Exception hierarchy shared by all modules."""


class EprSimError(Exception):
    """Base class for every error raised by eprsim."""


class DimensionMismatch(EprSimError, ValueError):
    """Operand dimensions are incompatible."""


class NotHermitian(EprSimError, ValueError):
    """An operator expected to be Hermitian is not (within tolerance)."""


class InvalidState(EprSimError, ValueError):
    """A state vector or density operator violates its invariants."""


class FunctionUndefined(EprSimError, ValueError):
    """A spectral function is not defined on some eigenvalue."""


class NotAFunction(EprSimError, ValueError):
    """The target observable is not a function of the given refinement."""


class DegenerateRefinement(EprSimError, ValueError):
    """A refinement observable has a degenerate spectrum."""


class DegenerateInput(EprSimError, ValueError):
    """An observable required to be nondegenerate is degenerate."""


class InvalidRefinement(EprSimError, ValueError):
    """The supplied refinement does not refine the measured observable."""


class ZeroProbabilityOutcome(EprSimError, ValueError):
    """Conditioning on an outcome whose Born probability is (numerically) zero."""


class NonOrthonormalBasis(EprSimError, ValueError):
    """A supplied basis is not orthonormal or does not span its space."""


class UnsortedInput(EprSimError, ValueError):
    """An event stream is not sorted by timestamp."""


class NoPairsAtSettings(EprSimError, ValueError):
    """No coincidence pairs were recorded at the requested settings."""


class MissingSettingPair(EprSimError, ValueError):
    """A correlation needed for the CHSH combination is missing."""


class InvalidConfig(EprSimError, ValueError):
    """A configuration value is out of range; ``field`` names the culprit."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message


class InvariantViolation(EprSimError, RuntimeError):
    """An internal postcondition failed; indicates a bug, not bad input."""
