"""Exception types shared across the package."""


class MsgenError(Exception):
    pass


class ShapeError(MsgenError, ValueError):
    """Operand shapes are incompatible."""


class DomainError(MsgenError, ValueError):
    """An argument lies outside the domain of the operation."""


class NumericError(MsgenError, FloatingPointError):
    """A computation produced NaN or Inf."""


class ContractError(MsgenError, RuntimeError):
    """A caller violated a precondition of the API."""


class TrainingDiverged(NumericError):
    """Training hit a non-finite loss.

    ``last_good`` holds the parameter snapshot (name -> array) from the last
    step whose loss was finite, so callers can write a checkpoint.
    """

    def __init__(self, message, last_good=None, epoch=None):
        super().__init__(message)
        self.last_good = last_good or {}
        self.epoch = epoch
