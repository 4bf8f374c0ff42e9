from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, Field, ValidationError

from sfereg.errors import ConfigError, MissingArtifactError, ShapeError

DEFAULT_SPACING_MM = 6.8


class Modality(str, Enum):
    """
    What a volume holds.

    mu_map voxels are linear attenuation coefficients in cm^-1,
    spect voxels are mean-normalized counts.
    """

    MU_MAP = "mu_map"
    SPECT = "spect"


@dataclass(frozen=True, eq=False)
class Volume:
    """
    A 3-D scalar field on a regular grid.

    `data` is indexed [z, y, x] so that x is the fastest-varying axis in memory.
    """

    data: np.ndarray
    spacing_mm: tuple[float, float, float] = (
        DEFAULT_SPACING_MM,
        DEFAULT_SPACING_MM,
        DEFAULT_SPACING_MM,
    )
    modality: Modality = Modality.MU_MAP

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ShapeError(f"Volume data must be 3-D, got shape {self.data.shape}")
        if np.any(self.data < 0):
            raise ShapeError(f"{self.modality.value} volume has negative voxels")

    @property
    def dims(self) -> tuple[int, int, int]:
        nz, ny, nx = self.data.shape
        return nx, ny, nz

    def with_data(self, data: np.ndarray) -> "Volume":
        return replace(self, data=data)

    def same_grid(self, other: "Volume") -> bool:
        return self.dims == other.dims and np.allclose(self.spacing_mm, other.spacing_mm)


class VolumeHeader(BaseModel):
    magic: Literal["VOLR1"] = "VOLR1"
    dims: tuple[int, int, int] = Field(..., description="(nx, ny, nz) voxels")
    spacing_mm: tuple[float, float, float] = Field(..., description="(sx, sy, sz) mm per voxel")
    modality: Modality
    dtype: Literal["f32le"] = "f32le"
    order: Literal["x-fastest"] = "x-fastest"


def write_volume(path: str | Path, volume: Volume) -> Path:
    """Header line of JSON, newline, then the raw little-endian float32 payload."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = VolumeHeader(
        dims=volume.dims,
        spacing_mm=tuple(float(s) for s in volume.spacing_mm),
        modality=volume.modality,
    )
    with open(path, "wb") as f:
        f.write(header.model_dump_json().encode("utf-8"))
        f.write(b"\n")
        f.write(np.ascontiguousarray(volume.data, dtype="<f4").tobytes())
    return path


def read_volume(path: str | Path) -> Volume:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"Volume file not found: {path}")
    raw = path.read_bytes()
    newline = raw.find(b"\n")
    if newline < 0:
        raise ConfigError(f"{path} has no VOLR header line")
    try:
        header = VolumeHeader.model_validate_json(raw[:newline])
    except ValidationError as e:
        raise ConfigError(f"Invalid VOLR header in {path}: {e}") from e

    nx, ny, nz = header.dims
    payload = np.frombuffer(raw, dtype="<f4", offset=newline + 1)
    if payload.size != nx * ny * nz:
        raise ShapeError(f"{path}: payload has {payload.size} voxels, header says {nx * ny * nz}")
    return Volume(
        data=payload.reshape(nz, ny, nx).astype(np.float32),
        spacing_mm=header.spacing_mm,
        modality=header.modality,
    )
