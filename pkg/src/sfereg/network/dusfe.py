"""
Dual-branch squeeze-fusion-excitation.

Both branches squeeze each modality, fuse the two squeezed signals, and excite
one sigmoid gate per modality:

    channel branch   V = pool(F);  V_fuse = w [V1, V2] + b;  R_i = w_i V_fuse + b_i;  F_i * sigmoid(R_i)
    spatial branch   M_i = K_in_i * F_i;  M_fuse = K_fuse * [M1, M2];  S_i = K_out_i * M_fuse;  F_i * sigmoid(S_i)
    combined         F_i + channel_i + spatial_i

Excitation layers start at zero so a fresh module maps F to exactly 2F.
"""

from dataclasses import dataclass

import numpy as np

from sfereg.errors import ShapeError
from sfereg.network.module import Module, fan_in_uniform
from sfereg.tensor import ops
from sfereg.tensor.tensor import Tensor


@dataclass(frozen=True)
class FeaturePair:
    """Stream 1 carries mu-map features, stream 2 SPECT features."""

    f1: Tensor
    f2: Tensor

    def __post_init__(self):
        if self.f1.shape != self.f2.shape:
            raise ShapeError(f"Feature streams differ: {self.f1.shape} vs {self.f2.shape}")
        if self.f1.ndim != 5:
            raise ShapeError(f"Features must be [B, C, D, H, W], got {self.f1.shape}")

    @property
    def channels(self) -> int:
        return self.f1.shape[1]

    def swapped(self) -> "FeaturePair":
        return FeaturePair(self.f2, self.f1)


class ChannelSFE(Module):
    def __init__(self, path: str, channels: int, rng: np.random.Generator):
        super().__init__(path)
        c = channels
        self.channels = c
        self.w_fuse = self.add_parameter("w_fuse", fan_in_uniform(rng, (c, 2 * c), 2 * c))
        self.b_fuse = self.add_parameter("b_fuse", np.zeros(c))
        self.w1 = self.add_parameter("w1", np.zeros((c, c)))
        self.b1 = self.add_parameter("b1", np.zeros(c))
        self.w2 = self.add_parameter("w2", np.zeros((c, c)))
        self.b2 = self.add_parameter("b2", np.zeros(c))

    def forward(self, pair: FeaturePair) -> FeaturePair:
        return csfe(pair, self)


class SpatialSFE(Module):
    def __init__(self, path: str, channels: int, rng: np.random.Generator):
        super().__init__(path)
        c = channels
        self.channels = c
        self.k_in1 = self.add_parameter("k_in1", fan_in_uniform(rng, (1, c, 1, 1, 1), c))
        self.b_in1 = self.add_parameter("b_in1", np.zeros(1))
        self.k_in2 = self.add_parameter("k_in2", fan_in_uniform(rng, (1, c, 1, 1, 1), c))
        self.b_in2 = self.add_parameter("b_in2", np.zeros(1))
        self.k_fuse = self.add_parameter("k_fuse", fan_in_uniform(rng, (1, 2, 1, 1, 1), 2))
        self.b_fuse = self.add_parameter("b_fuse", np.zeros(1))
        self.k_out1 = self.add_parameter("k_out1", np.zeros((1, 1, 3, 3, 3)))
        self.b_out1 = self.add_parameter("b_out1", np.zeros(1))
        self.k_out2 = self.add_parameter("k_out2", np.zeros((1, 1, 3, 3, 3)))
        self.b_out2 = self.add_parameter("b_out2", np.zeros(1))

    def forward(self, pair: FeaturePair) -> FeaturePair:
        return ssfe(pair, self)


class DuSFE(Module):
    def __init__(self, path: str, channels: int, rng: np.random.Generator):
        super().__init__(path)
        self.channels = channels
        self.csfe = self.add_module("csfe", ChannelSFE(self.child_path("csfe"), channels, rng))
        self.ssfe = self.add_module("ssfe", SpatialSFE(self.child_path("ssfe"), channels, rng))

    def forward(self, pair: FeaturePair) -> FeaturePair:
        return dusfe(pair, self)


def _check_width(pair: FeaturePair, channels: int) -> None:
    if pair.channels != channels:
        raise ShapeError(f"Features have {pair.channels} channels, module expects {channels}")


def csfe(pair: FeaturePair, weights: ChannelSFE) -> FeaturePair:
    _check_width(pair, weights.channels)
    v1 = ops.global_avg_pool(pair.f1)
    v2 = ops.global_avg_pool(pair.f2)
    v_fuse = ops.fully_connected(ops.concat_channels(v1, v2), weights.w_fuse, weights.b_fuse)
    r1 = ops.fully_connected(v_fuse, weights.w1, weights.b1)
    r2 = ops.fully_connected(v_fuse, weights.w2, weights.b2)
    return FeaturePair(
        ops.mul(ops.sigmoid(r1), pair.f1),
        ops.mul(ops.sigmoid(r2), pair.f2),
    )


def ssfe(pair: FeaturePair, weights: SpatialSFE) -> FeaturePair:
    _check_width(pair, weights.channels)
    m1 = ops.conv3d(pair.f1, weights.k_in1, weights.b_in1)
    m2 = ops.conv3d(pair.f2, weights.k_in2, weights.b_in2)
    m_fuse = ops.conv3d(ops.concat_channels(m1, m2), weights.k_fuse, weights.b_fuse)
    s1 = ops.conv3d(m_fuse, weights.k_out1, weights.b_out1, padding=1)
    s2 = ops.conv3d(m_fuse, weights.k_out2, weights.b_out2, padding=1)
    return FeaturePair(
        ops.mul(ops.sigmoid(s1), pair.f1),
        ops.mul(ops.sigmoid(s2), pair.f2),
    )


def dusfe(pair: FeaturePair, weights: DuSFE) -> FeaturePair:
    channel = csfe(pair, weights.csfe)
    spatial = ssfe(pair, weights.ssfe)
    return FeaturePair(
        ops.add(ops.add(pair.f1, channel.f1), spatial.f1),
        ops.add(ops.add(pair.f2, channel.f2), spatial.f2),
    )
