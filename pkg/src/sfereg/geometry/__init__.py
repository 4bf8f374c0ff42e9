from sfereg.geometry.rigid import (
    RigidParams,
    invert,
    params_to_matrix,
    resample,
    rigid_inverse,
)
from sfereg.geometry.volume import Modality, Volume, read_volume, write_volume

__all__ = [
    "Modality",
    "RigidParams",
    "Volume",
    "invert",
    "params_to_matrix",
    "read_volume",
    "resample",
    "rigid_inverse",
    "write_volume",
]
