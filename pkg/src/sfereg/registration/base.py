from abc import ABC, abstractmethod
from enum import Enum

from sfereg.errors import ShapeError
from sfereg.geometry.rigid import RigidParams, invert, resample
from sfereg.geometry.volume import Volume


class Method(str, Enum):
    BASELINE_MOTION = "baseline_motion"
    MUTUAL_INFORMATION = "mutual_information"
    DENSENET = "densenet"
    DENSENET_DUSFE = "densenet_dusfe"

    @property
    def learned(self) -> bool:
        return self in (Method.DENSENET, Method.DENSENET_DUSFE)


class Registrar(ABC):
    """
    Estimates the misregistration of a mu-map against its SPECT volume.

    The estimate follows the motion convention: it is the transform that moved
    the aligned map, so `register` applies its inverse.
    """

    method: Method

    @abstractmethod
    def estimate(self, mu_moved: Volume, spect: Volume) -> RigidParams:
        raise NotImplementedError("Subclasses must implement this method")


class MotionBaseline(Registrar):
    """Predicts no motion at all; errors equal the simulated motion."""

    method = Method.BASELINE_MOTION

    def estimate(self, mu_moved: Volume, spect: Volume) -> RigidParams:
        return RigidParams()


def register(mu_moved: Volume, spect: Volume, registrar: Registrar) -> tuple[RigidParams, Volume]:
    if not mu_moved.same_grid(spect):
        raise ShapeError(f"mu-map {mu_moved.dims} and SPECT {spect.dims} are on different grids")
    predicted = registrar.estimate(mu_moved, spect)
    return predicted, resample(mu_moved, invert(predicted, mu_moved.dims))
