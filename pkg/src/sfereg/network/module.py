from abc import ABC, abstractmethod

import numpy as np

from sfereg.errors import ShapeError
from sfereg.tensor import ops
from sfereg.tensor.optim import Parameter
from sfereg.tensor.tensor import Tensor, default_dtype


class Module(ABC):
    """
    A tree of named parameters.

    Every parameter name is the dotted path of the modules above it, e.g.
    "block2.dusfe.csfe.w_fuse", so names are unique within a model.
    """

    def __init__(self, path: str = ""):
        self.path = path
        self._parameters: dict[str, Parameter] = {}
        self._children: dict[str, "Module"] = {}

    def child_path(self, key: str) -> str:
        return f"{self.path}.{key}" if self.path else key

    def add_parameter(self, key: str, data: np.ndarray) -> Tensor:
        param = Parameter(self.child_path(key), Tensor(data, requires_grad=True, dtype=default_dtype()))
        self._parameters[key] = param
        return param.tensor

    def add_module[M: "Module"](self, key: str, module: M) -> M:
        self._children[key] = module
        return module

    def parameters(self) -> list[Parameter]:
        params = list(self._parameters.values())
        for child in self._children.values():
            params.extend(child.parameters())
        return params

    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def state(self) -> dict[str, np.ndarray]:
        return {p.name: p.data.copy() for p in self.parameters()}

    def load_state(self, arrays: dict[str, np.ndarray]) -> None:
        params = {p.name: p for p in self.parameters()}
        if set(params) != set(arrays):
            missing = sorted(set(params) ^ set(arrays))
            raise ShapeError(f"State does not match the model; differing names: {missing[:5]}")
        for name, array in arrays.items():
            if params[name].shape != array.shape:
                raise ShapeError(f"{name}: stored shape {array.shape} vs model {params[name].shape}")
            params[name].tensor.data[...] = array

    @abstractmethod
    def forward(self, *args, **kwargs): ...

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def fan_in_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Conv3d(Module):
    def __init__(
        self,
        path: str,
        in_channels: int,
        out_channels: int,
        rng: np.random.Generator,
        kernel_size: int = 3,
        stride: int = 1,
        padding: int | None = None,
        zero_init: bool = False,
    ):
        super().__init__(path)
        shape = (out_channels, in_channels, kernel_size, kernel_size, kernel_size)
        fan_in = in_channels * kernel_size**3
        self.weight = self.add_parameter(
            "weight", np.zeros(shape) if zero_init else fan_in_uniform(rng, shape, fan_in)
        )
        self.bias = self.add_parameter("bias", np.zeros(out_channels))
        self.stride = stride
        self.padding = kernel_size // 2 if padding is None else padding

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv3d(x, self.weight, self.bias, self.stride, self.padding)


class Linear(Module):
    def __init__(
        self,
        path: str,
        in_features: int,
        out_features: int,
        rng: np.random.Generator,
        zero_init: bool = False,
    ):
        super().__init__(path)
        shape = (out_features, in_features)
        self.weight = self.add_parameter(
            "weight", np.zeros(shape) if zero_init else fan_in_uniform(rng, shape, in_features)
        )
        self.bias = self.add_parameter("bias", np.zeros(out_features))

    def forward(self, x: Tensor) -> Tensor:
        return ops.fully_connected(x, self.weight, self.bias)
