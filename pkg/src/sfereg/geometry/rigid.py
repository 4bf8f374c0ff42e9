"""
Rigid motion model and trilinear resampling.

Convention used everywhere (labels depend on it):

    M = T(center) . Rz(az) . Ry(ay) . Rx(ax) . T(-center) . T(tx, ty, tz)

acting on homogeneous voxel coordinates (x, y, z, 1). Rotations are about the
volume center ((nx-1)/2, (ny-1)/2, (nz-1)/2); angles are in degrees.
"""

from dataclasses import astuple, dataclass

import numpy as np
from scipy.ndimage import map_coordinates

from sfereg.errors import NumericalError
from sfereg.geometry.volume import Volume

PARAM_NAMES = ("tx", "ty", "tz", "ax", "ay", "az")


@dataclass(frozen=True)
class RigidParams:
    """Translations in voxels, rotations in degrees."""

    tx: float = 0.0
    ty: float = 0.0
    tz: float = 0.0
    ax: float = 0.0
    ay: float = 0.0
    az: float = 0.0

    def __post_init__(self):
        if not np.all(np.isfinite(astuple(self))):
            raise NumericalError(f"Non-finite rigid parameters: {astuple(self)}")

    @classmethod
    def from_array(cls, values) -> "RigidParams":
        values = [float(v) for v in np.asarray(values, dtype=np.float64).reshape(-1)]
        if len(values) != 6:
            raise NumericalError(f"Expected 6 rigid parameters, got {len(values)}")
        return cls(*values)

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=np.float64)

    @property
    def translation(self) -> np.ndarray:
        return self.as_array()[:3]

    @property
    def rotation(self) -> np.ndarray:
        return self.as_array()[3:]


def rotation_matrix(ax: float, ay: float, az: float) -> np.ndarray:
    rx, ry, rz = np.deg2rad([ax, ay, az])
    cx, sx = np.cos(rx), np.sin(rx)
    cy, sy = np.cos(ry), np.sin(ry)
    cz, sz = np.cos(rz), np.sin(rz)
    rot_x = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    rot_y = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rot_z = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return rot_z @ rot_y @ rot_x


def _translation(offset) -> np.ndarray:
    m = np.eye(4)
    m[:3, 3] = offset
    return m


def volume_center(dims: tuple[int, int, int]) -> np.ndarray:
    return (np.asarray(dims, dtype=np.float64) - 1.0) / 2.0


def params_to_matrix(p: RigidParams, dims: tuple[int, int, int]) -> np.ndarray:
    """4x4 homogeneous matrix in voxel coordinates; `dims` is (nx, ny, nz)."""
    center = volume_center(dims)
    rot = np.eye(4)
    rot[:3, :3] = rotation_matrix(p.ax, p.ay, p.az)
    return _translation(center) @ rot @ _translation(-center) @ _translation(p.translation)


def rigid_inverse(matrix: np.ndarray) -> np.ndarray:
    r = matrix[:3, :3]
    out = np.eye(4)
    out[:3, :3] = r.T
    out[:3, 3] = -r.T @ matrix[:3, 3]
    return out


def invert(p: RigidParams, dims: tuple[int, int, int]) -> np.ndarray:
    return rigid_inverse(params_to_matrix(p, dims))


def resample(volume: Volume, matrix: np.ndarray) -> Volume:
    """
    Backward warp: output voxel q takes the trilinear sample of `volume` at inverse(matrix) . q.

    Dims, spacing and modality are preserved; outside the source grid the fill value is 0.
    """
    if abs(np.linalg.det(matrix[:3, :3])) < 1e-12:
        raise NumericalError("Cannot resample with a singular matrix")
    inverse = np.linalg.inv(matrix)

    nx, ny, nz = volume.dims
    z, y, x = np.meshgrid(
        np.arange(nz, dtype=np.float64),
        np.arange(ny, dtype=np.float64),
        np.arange(nx, dtype=np.float64),
        indexing="ij",
    )
    grid = np.stack([x.ravel(), y.ravel(), z.ravel(), np.ones(x.size)])
    src = inverse @ grid
    shape = (nz, ny, nx)
    # order 1 is trilinear; grid-constant pads with 0 so edge voxels blend toward the fill
    sampled = map_coordinates(
        volume.data.astype(np.float64),
        [src[2].reshape(shape), src[1].reshape(shape), src[0].reshape(shape)],
        order=1,
        mode="grid-constant",
        cval=0.0,
    )
    return volume.with_data(sampled.astype(volume.data.dtype))
