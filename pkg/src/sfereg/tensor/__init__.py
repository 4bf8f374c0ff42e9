from sfereg.tensor.tensor import (
    Gradients,
    Tape,
    Tensor,
    active_tape,
    backward,
    default_dtype,
    no_grad,
    precision,
)
from sfereg.tensor.optim import Adam, Parameter, adam_step

__all__ = [
    "Adam",
    "Gradients",
    "Parameter",
    "Tape",
    "Tensor",
    "active_tape",
    "adam_step",
    "backward",
    "default_dtype",
    "no_grad",
    "precision",
]
