"""Two-stage generative modelling on numpy: a disentangled coarse model, a
detail-adding conditional model, and the tooling to train and evaluate them."""

from .errors import ContractError, DomainError, MsgenError, NumericError, ShapeError, TrainingDiverged
from .tensor import Tensor, grad, grad_check, precision

__version__ = "0.1.0"

__all__ = [
    "ContractError",
    "DomainError",
    "MsgenError",
    "NumericError",
    "ShapeError",
    "Tensor",
    "TrainingDiverged",
    "grad",
    "grad_check",
    "precision",
]
