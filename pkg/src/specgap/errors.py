"""Exception types raised across the package."""


class SpecgapError(Exception):
    """Base class for all package errors."""


class DomainNotFundamental(SpecgapError):
    pass


class NoWells(SpecgapError):
    pass


class QuadratureFailure(SpecgapError):
    pass


class GridTooCoarse(SpecgapError):
    pass


class NonHermitianAssembly(SpecgapError):
    pass


class TruncationTooSmall(SpecgapError):
    pass


class NoConvergence(SpecgapError):
    """An eigenpair failed its residual certificate."""

    def __init__(self, index, residual=None, message=None):
        self.index = index
        self.residual = residual
        super().__init__(message or f"eigenpair {index} did not converge (residual={residual})")


class NoAdmissibleInteger(SpecgapError):
    def __init__(self, message, h_max=None):
        self.h_max = h_max
        super().__init__(message)


class NoLevelSet(SpecgapError):
    pass


class CutoffClipped(SpecgapError):
    pass


class InsufficientSamples(SpecgapError):
    pass


class GridMismatch(SpecgapError):
    pass


class WindowNotExhausted(SpecgapError):
    pass


class ResolutionTooFine(SpecgapError):
    pass


class ConfigError(SpecgapError):
    """Invalid experiment configuration (maps to exit code 2)."""

    def __init__(self, message, line=None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
