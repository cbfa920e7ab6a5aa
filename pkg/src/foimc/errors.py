"""Exception hierarchy shared by every foimc module."""


class FoImcError(Exception):
    """Base class for all errors raised by foimc."""


class DomainError(FoImcError, ValueError):
    """An argument lies outside the domain of the operation."""


class SingularityError(FoImcError, ArithmeticError):
    """A transfer-function denominator vanished numerically."""


class SpecError(FoImcError, ValueError):
    """The robustness specification cannot be handled."""


class InfeasibleSpecError(SpecError):
    """Gain or phase margin outside the range the design method supports."""


class BranchError(SpecError):
    """A boundary function was evaluated exactly at its removable singularity."""


class NotApplicableError(SpecError):
    """A boundary does not exist for this phase margin (whole range is admissible)."""


class EmptyFeasibleSetError(SpecError):
    """No fractional order gives a real, positive gain crossover."""


class RealnessError(FoImcError, ValueError):
    """A closed-form crossover frequency is complex for the given order."""


class InfeasibleSampleError(FoImcError, ValueError):
    """A computed filter constant is not strictly positive."""

    def __init__(self, message, value):
        super().__init__(message)
        self.value = value


class NoIntersectionError(FoImcError):
    """The phase-margin and gain-margin filter-constant curves never cross."""

    def __init__(self, message, guidance):
        super().__init__(f"{message}; {guidance}")
        self.guidance = guidance


class VerificationError(FoImcError):
    """A frequency-domain measurement could not be completed."""


class NoGainCrossoverError(VerificationError):
    pass


class NoPhaseCrossoverError(VerificationError):
    pass


class VerificationMismatchError(VerificationError):
    """Measured margins disagree with the requested ones."""


class OracleFailureError(VerificationError):
    """The brute-force search found no candidate meeting the specification."""

    def __init__(self, message, objective):
        super().__init__(message)
        self.objective = objective


class IntegrationError(FoImcError, ArithmeticError):
    """Frequency-domain inversion did not converge."""

    def __init__(self, message, estimate):
        super().__init__(message)
        self.estimate = estimate
