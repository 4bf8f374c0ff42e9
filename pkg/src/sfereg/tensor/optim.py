from dataclasses import dataclass, field

import numpy as np

from sfereg.errors import UsageError
from sfereg.tensor.tensor import Gradients, Tensor


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0


@dataclass
class Parameter:
    """A named trainable tensor plus its Adam moments."""

    name: str
    tensor: Tensor
    adam_state: AdamState = field(init=False)

    def __post_init__(self):
        if not self.tensor.requires_grad:
            raise UsageError(f"Parameter {self.name} must track gradients")
        self.adam_state = AdamState(
            m=np.zeros_like(self.tensor.data), v=np.zeros_like(self.tensor.data)
        )

    @property
    def data(self) -> np.ndarray:
        return self.tensor.data

    @property
    def shape(self) -> tuple[int, ...]:
        return self.tensor.shape

    @property
    def size(self) -> int:
        return self.tensor.size


def adam_step(
    params: list[Parameter],
    grads: Gradients,
    lr: float,
    beta1: float = 0.5,
    beta2: float = 0.99,
    eps: float = 1e-8,
) -> None:
    """Bias-corrected Adam update applied in place to every parameter."""
    missing = [p.name for p in params if p.tensor not in grads]
    if missing:
        raise UsageError(f"No gradient for parameter {missing[0]}")

    for p in params:
        g = grads[p.tensor]
        state = p.adam_state
        state.step += 1
        state.m *= beta1
        state.m += (1.0 - beta1) * g
        state.v *= beta2
        state.v += (1.0 - beta2) * (g * g)

        m_hat = state.m / (1.0 - beta1**state.step)
        v_hat = state.v / (1.0 - beta2**state.step)
        p.tensor.data -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.data.dtype)


class Adam:
    """Holds the hyper-parameters for repeated `adam_step` calls; `lr` is mutable for decay."""

    def __init__(
        self,
        params: list[Parameter],
        lr: float,
        beta1: float = 0.5,
        beta2: float = 0.99,
        eps: float = 1e-8,
    ):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps

    def step(self, grads: Gradients) -> None:
        adam_step(self.params, grads, self.lr, self.beta1, self.beta2, self.eps)
