import numpy as np

from sfereg.network.module import Conv3d, Module
from sfereg.tensor import ops
from sfereg.tensor.tensor import Tensor


class DenseBlock(Module):
    """
    Densely connected 3x3x3 conv + ReLU layers.

    Each layer sees the concatenation of the block input and every earlier
    layer's output; the block returns that full concatenation.
    """

    def __init__(
        self,
        path: str,
        in_channels: int,
        growth_rate: int,
        n_layers: int,
        rng: np.random.Generator,
    ):
        super().__init__(path)
        self.layers: list[Conv3d] = []
        channels = in_channels
        for i in range(n_layers):
            key = f"layer{i}"
            self.layers.append(
                self.add_module(key, Conv3d(self.child_path(key), channels, growth_rate, rng))
            )
            channels += growth_rate
        self.out_channels = channels

    def forward(self, x: Tensor) -> Tensor:
        features = [x]
        for layer in self.layers:
            features.append(ops.relu(layer(ops.concat_channels(*features))))
        return ops.concat_channels(*features)


class StreamLevel(Module):
    """Dense block followed by a stride-2 conv that halves every spatial extent."""

    def __init__(
        self,
        path: str,
        in_channels: int,
        out_channels: int,
        growth_rate: int,
        n_layers: int,
        rng: np.random.Generator,
    ):
        super().__init__(path)
        self.dense = self.add_module(
            "dense", DenseBlock(self.child_path("dense"), in_channels, growth_rate, n_layers, rng)
        )
        self.down = self.add_module(
            "down", Conv3d(self.child_path("down"), self.dense.out_channels, out_channels, rng, stride=2)
        )

    def forward(self, x: Tensor) -> Tensor:
        return ops.relu(self.down(self.dense(x)))
