from sfereg.network.dusfe import DuSFE, FeaturePair, csfe, dusfe, ssfe
from sfereg.network.regnet import ModelConfig, RegistrationNet, volumes_to_tensor

__all__ = [
    "DuSFE",
    "FeaturePair",
    "ModelConfig",
    "RegistrationNet",
    "csfe",
    "dusfe",
    "ssfe",
    "volumes_to_tensor",
]
