from pathlib import Path

from loguru import logger

from sfereg.errors import ConfigError, MissingArtifactError
from sfereg.geometry.rigid import RigidParams
from sfereg.geometry.volume import Volume
from sfereg.network.regnet import ModelConfig, RegistrationNet
from sfereg.registration.base import Method, Registrar
from sfereg.tensor.checkpoint import load_checkpoint


class NetworkRegistrar(Registrar):
    """Raw, unclamped network outputs as the motion estimate."""

    def __init__(self, model: RegistrationNet, method: Method):
        if not method.learned:
            raise ConfigError(f"{method.value} is not a learned method")
        if model.cfg.use_dusfe != (method is Method.DENSENET_DUSFE):
            raise ConfigError(f"Model with use_dusfe={model.cfg.use_dusfe} cannot serve {method.value}")
        self.model = model
        self.method = method

    @classmethod
    def from_checkpoint(cls, path: str | Path, method: Method) -> "NetworkRegistrar":
        path = Path(path)
        if not path.exists():
            raise MissingArtifactError(f"No checkpoint for {method.value}: {path}")
        arrays, meta = load_checkpoint(path)
        model = RegistrationNet(ModelConfig.model_validate(meta["model_config"]))
        model.load_state(arrays)
        logger.info(f"Loaded {method.value} from {path} (epoch {meta.get('epoch')})")
        return cls(model, method)

    def estimate(self, mu_moved: Volume, spect: Volume) -> RigidParams:
        return self.model.estimate(mu_moved, spect)
