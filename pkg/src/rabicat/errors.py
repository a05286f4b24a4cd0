"""Exception hierarchy shared by all modules.

Numerical failures derive from :class:`NumericalError` so the CLI can map
them onto a single exit code; configuration problems derive from
:class:`ConfigError`.
"""


class RabicatError(Exception):
    """Base class for every error raised by the package."""


class NumericalError(RabicatError):
    pass


class ConfigError(RabicatError):
    pass


class ParseError(ConfigError):
    pass


class ValidationError(ConfigError):
    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")


class EmptyBranch(NumericalError):
    """Requested potential well does not exist at the given energy."""


class SingularEnergy(NumericalError):
    """Level density requested exactly at a critical energy."""


class WellCeiling(NumericalError):
    """Quantum number exceeds the number of orbits the well can hold."""


class NoConvergence(NumericalError):
    def __init__(self, message, sweeps=None, off_norm=None):
        self.sweeps = sweeps
        self.off_norm = off_norm
        super().__init__(message)


class DegenerateEigenvalue(NumericalError):
    pass


class BasisMismatch(NumericalError):
    pass


class IndexOutOfRange(NumericalError):
    pass


class TransientNotBracketed(NumericalError):
    pass


class NoApproachFound(NumericalError):
    pass


class PrecisionExhausted(NumericalError):
    """Zoom resolution hit the arithmetic precision before the gap saturated.

    ``bound`` is the smallest gap seen, an upper bound on the true one.
    """

    def __init__(self, message, bound=None, report=None):
        self.bound = bound
        self.report = report
        super().__init__(message)


class InvalidProbability(NumericalError):
    pass


class NormLeakage(NumericalError):
    pass


class UnassignedPopulation(NumericalError):
    pass


class WindowOutOfRange(NumericalError):
    pass


class UndefinedEnsemble(NumericalError):
    pass


class InsufficientLevels(NumericalError):
    pass
