"""Exception hierarchy.

Two roots matter to callers: :class:`ValidationError` for bad inputs or
configuration (the CLI maps these to exit code 1) and :class:`NumericalError`
for failures that arise while computing (exit code 2).
"""


class LatentAtlasError(Exception):
    pass


class ValidationError(LatentAtlasError, ValueError):
    pass


class NumericalError(LatentAtlasError, ArithmeticError):
    pass


# -- validation -------------------------------------------------------------

class ConfigError(ValidationError):
    pass


class ShapeError(ValidationError):
    pass


class DomainError(ValidationError):
    pass


class ParseError(ValidationError):
    def __init__(self, message, line=None, column=None):
        if line is not None:
            where = f"line {line}" + (f", column {column}" if column is not None else "")
            message = f"{where}: {message}"
        super().__init__(message)
        self.line = line
        self.column = column


class NotScalar(ValidationError):
    pass


class TapeConsumed(LatentAtlasError, RuntimeError):
    pass


class InsufficientSamples(ValidationError):
    pass


class AnchorMismatch(ValidationError):
    pass


class DimMismatch(ValidationError):
    pass


# -- numerical --------------------------------------------------------------

class NonFiniteError(NumericalError):
    pass


class NonFiniteState(NonFiniteError):
    pass


class StepSizeUnderflow(NumericalError):
    pass


class GenerationFailed(NumericalError):
    pass


class DegenerateChannel(NumericalError):
    pass


class DegenerateFeature(NumericalError):
    def __init__(self, column, std):
        super().__init__(f"feature column {column} has std {std:.3g} (< 1e-12)")
        self.column = column


class ZeroVector(NumericalError):
    pass


class ZeroVariance(NumericalError):
    pass


class DegenerateInput(NumericalError):
    pass


class SingularSystem(NumericalError):
    pass


class Diverged(NumericalError):
    pass
