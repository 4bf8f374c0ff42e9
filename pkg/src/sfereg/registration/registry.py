from pathlib import Path

from loguru import logger

from sfereg.errors import ConfigError
from sfereg.registration.base import Method, MotionBaseline, Registrar
from sfereg.registration.mutual_information import MIConfig, MutualInformationRegistrar
from sfereg.registration.network import NetworkRegistrar

METHOD_ORDER = (
    Method.BASELINE_MOTION,
    Method.MUTUAL_INFORMATION,
    Method.DENSENET,
    Method.DENSENET_DUSFE,
)


def parse_method(name: str) -> Method:
    try:
        return Method(name)
    except ValueError:
        known = ", ".join(m.value for m in Method)
        raise ConfigError(f"Unknown method {name!r}; expected one of {known}") from None


def build_registrar(
    method: Method,
    mi: MIConfig | None = None,
    checkpoints: dict[Method, Path] | None = None,
    jobs: int = 1,
) -> Registrar:
    logger.info(f"Building registrar {method.value}")
    match method:
        case Method.BASELINE_MOTION:
            return MotionBaseline()
        case Method.MUTUAL_INFORMATION:
            return MutualInformationRegistrar(mi or MIConfig(), jobs)
        case Method.DENSENET | Method.DENSENET_DUSFE:
            if not checkpoints or method not in checkpoints:
                raise ConfigError(f"No checkpoint location configured for {method.value}")
            return NetworkRegistrar.from_checkpoint(checkpoints[method], method)
