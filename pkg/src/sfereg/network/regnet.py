import numpy as np
from pydantic import BaseModel, Field, model_validator

from sfereg.errors import ShapeError
from sfereg.geometry.rigid import RigidParams
from sfereg.geometry.volume import Volume
from sfereg.network.densenet import StreamLevel
from sfereg.network.dusfe import DuSFE, FeaturePair
from sfereg.network.module import Conv3d, Linear, Module
from sfereg.tensor import ops
from sfereg.tensor.tensor import Tensor, default_dtype, no_grad
from sfereg.util import derive_seed

N_LEVELS = 3


class ModelConfig(BaseModel):
    input_dims: tuple[int, int, int] = Field((64, 64, 64), description="(nx, ny, nz) of both inputs")
    level_widths: tuple[int, int, int] = Field((16, 32, 64), description="Stream width after each level")
    dense_layers: int = Field(2, ge=1, description="Conv layers per dense block")
    growth_rate: int | None = Field(None, description="Dense growth rate; default half the level width")
    use_dusfe: bool = Field(True, description="False gives the DenseNet-only ablation")
    registration_widths: tuple[int, ...] = Field((128, 128), description="Deep registration conv widths")
    fc_widths: tuple[int, ...] = Field((256, 64), description="Hidden widths of the regression head")
    seed: int = Field(0, description="Weight initialization seed")

    @model_validator(mode="after")
    def _check(self) -> "ModelConfig":
        if min(self.level_widths) <= 0 or min(self.registration_widths, default=1) <= 0:
            raise ValueError("Channel widths must be positive")
        if any(n % 2**N_LEVELS for n in self.input_dims):
            raise ValueError(f"input_dims must be divisible by {2**N_LEVELS}")
        return self

    def growth(self, level: int) -> int:
        return self.growth_rate or max(1, self.level_widths[level] // 2)

    @property
    def bottleneck_dims(self) -> tuple[int, int, int]:
        nx, ny, nz = self.input_dims
        f = 2**N_LEVELS
        return nx // f, ny // f, nz // f


def volumes_to_tensor(volumes: list[Volume]) -> Tensor:
    return Tensor(np.stack([v.data for v in volumes])[:, None], dtype=default_dtype())


class RegistrationNet(Module):
    """
    Two cross-connected DenseNet streams (mu-map, SPECT) with a DuSFE module after
    every level, late channel concatenation, a deep registration conv stack and a
    fully connected head regressing (tx, ty, tz, ax, ay, az).
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        stream_rng = np.random.default_rng(derive_seed(cfg.seed, "streams"))
        fusion_rng = np.random.default_rng(derive_seed(cfg.seed, "dusfe"))
        head_rng = np.random.default_rng(derive_seed(cfg.seed, "head"))

        self.streams: list[list[StreamLevel]] = []
        for s in (1, 2):
            levels = []
            in_channels = 1
            for level, width in enumerate(cfg.level_widths):
                key = f"stream{s}.block{level + 1}"
                levels.append(
                    self.add_module(
                        key,
                        StreamLevel(key, in_channels, width, cfg.growth(level), cfg.dense_layers, stream_rng),
                    )
                )
                in_channels = width
            self.streams.append(levels)

        self.fusions: list[DuSFE] = []
        if cfg.use_dusfe:
            for level, width in enumerate(cfg.level_widths):
                key = f"block{level + 1}.dusfe"
                self.fusions.append(self.add_module(key, DuSFE(key, width, fusion_rng)))

        self.registration: list[Conv3d] = []
        channels = 2 * cfg.level_widths[-1]
        for i, width in enumerate(cfg.registration_widths):
            key = f"registration.conv{i}"
            self.registration.append(self.add_module(key, Conv3d(key, channels, width, head_rng)))
            channels = width

        self.head: list[Linear] = []
        features = channels * int(np.prod(cfg.bottleneck_dims))
        for i, width in enumerate((*cfg.fc_widths, 6)):
            key = f"head.fc{i}"
            self.head.append(self.add_module(key, Linear(key, features, width, head_rng)))
            features = width

    def forward(self, mu: Tensor, spect: Tensor) -> Tensor:
        expected = tuple(reversed(self.cfg.input_dims))
        for name, t in (("mu-map", mu), ("SPECT", spect)):
            if t.ndim != 5 or t.shape[1] != 1 or t.shape[2:] != expected:
                raise ShapeError(f"{name} input {t.shape} does not match [B, 1, {expected}]")

        f1, f2 = mu, spect
        for level in range(N_LEVELS):
            f1 = self.streams[0][level](f1)
            f2 = self.streams[1][level](f2)
            if self.cfg.use_dusfe:
                fused = self.fusions[level](FeaturePair(f1, f2))
                f1, f2 = fused.f1, fused.f2

        x = ops.concat_channels(f1, f2)
        for conv in self.registration:
            x = ops.relu(conv(x))
        x = ops.flatten(x)
        for i, fc in enumerate(self.head):
            x = fc(x)
            if i < len(self.head) - 1:
                x = ops.relu(x)
        return x

    def predict(self, mu_moved: list[Volume], spect: list[Volume]) -> np.ndarray:
        """Raw [B, 6] outputs, computed without recording a tape."""
        with no_grad():
            out = self.forward(volumes_to_tensor(mu_moved), volumes_to_tensor(spect))
        return out.data.astype(np.float64)

    def estimate(self, mu_moved: Volume, spect: Volume) -> RigidParams:
        for v in (mu_moved, spect):
            if v.dims != self.cfg.input_dims:
                raise ShapeError(f"Volume dims {v.dims} do not match model input {self.cfg.input_dims}")
        return RigidParams.from_array(self.predict([mu_moved], [spect])[0])

    def dusfe_parameter_count(self) -> int:
        return sum(f.parameter_count() for f in self.fusions)
