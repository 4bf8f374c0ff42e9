from sfereg.registration.base import Method, MotionBaseline, Registrar, register
from sfereg.registration.mutual_information import (
    MIConfig,
    MIResult,
    MutualInformationRegistrar,
    mutual_information,
    register_mi,
)
from sfereg.registration.network import NetworkRegistrar
from sfereg.registration.registry import METHOD_ORDER, build_registrar, parse_method

__all__ = [
    "METHOD_ORDER",
    "MIConfig",
    "MIResult",
    "Method",
    "MotionBaseline",
    "MutualInformationRegistrar",
    "NetworkRegistrar",
    "Registrar",
    "build_registrar",
    "mutual_information",
    "parse_method",
    "register",
    "register_mi",
]
