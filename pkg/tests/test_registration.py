import numpy as np
import pytest

from sfereg.data.motion import MotionRanges, build_dataset
from sfereg.data.phantom import generate_phantom
from sfereg.errors import ConfigError, MissingArtifactError, ShapeError
from sfereg.evaluation.metrics import nmse_nmae
from sfereg.geometry.rigid import RigidParams
from sfereg.geometry.volume import Volume
from sfereg.network.regnet import RegistrationNet
from sfereg.registration import (
    METHOD_ORDER,
    Method,
    MotionBaseline,
    MutualInformationRegistrar,
    NetworkRegistrar,
    Registrar,
    build_registrar,
    parse_method,
    register,
)
from sfereg.tensor.checkpoint import save_checkpoint

INTERIOR = (slice(3, 93),) * 3


class Oracle(Registrar):
    method = Method.BASELINE_MOTION

    def __init__(self, truth: RigidParams):
        self.truth = truth

    def estimate(self, mu_moved: Volume, spect: Volume) -> RigidParams:
        return self.truth


def test_baseline_leaves_the_map_untouched(desk_phantom):
    mu, spect = generate_phantom(desk_phantom)
    predicted, registered = register(mu, spect, MotionBaseline())
    assert predicted == RigidParams()
    np.testing.assert_array_equal(registered.data, mu.data)


def test_true_motion_restores_the_interior(band_limited_pair):
    smooth, spect = band_limited_pair
    for sample in build_dataset([(smooth, spect)], 10, MotionRanges(), master_seed=3):
        _, registered = register(sample.mu_moved, spect, Oracle(sample.truth))
        interior = registered.with_data(registered.data[INTERIOR])
        _, nmae = nmse_nmae(interior, smooth.with_data(smooth.data[INTERIOR]))
        assert nmae <= 0.02


def test_register_rejects_other_grids(desk_phantom):
    mu, _ = generate_phantom(desk_phantom)
    with pytest.raises(ShapeError):
        register(mu, Volume(np.ones((16, 16, 16))), MotionBaseline())


def test_parse_method():
    assert [parse_method(m.value) for m in METHOD_ORDER] == list(METHOD_ORDER)
    with pytest.raises(ConfigError, match="densenet_dusfe"):
        parse_method("elastix")


def test_build_registrar_kinds(tmp_path):
    assert isinstance(build_registrar(Method.BASELINE_MOTION), MotionBaseline)
    assert isinstance(build_registrar(Method.MUTUAL_INFORMATION), MutualInformationRegistrar)
    with pytest.raises(ConfigError):
        build_registrar(Method.DENSENET)
    with pytest.raises(MissingArtifactError, match="densenet_dusfe"):
        build_registrar(Method.DENSENET_DUSFE, checkpoints={Method.DENSENET_DUSFE: tmp_path / "best.ckpt.json"})


def test_network_registrar_round_trips_a_checkpoint(tmp_path, tiny_model, tiny_phantom):
    model = RegistrationNet(tiny_model)
    path = tmp_path / "best.ckpt.json"
    save_checkpoint(path, model.parameters(), {"epoch": 0, "model_config": tiny_model.model_dump(mode="json")})
    registrar = build_registrar(Method.DENSENET_DUSFE, checkpoints={Method.DENSENET_DUSFE: path})
    assert isinstance(registrar, NetworkRegistrar)

    mu, spect = generate_phantom(tiny_phantom)
    assert registrar.estimate(mu, spect) == model.estimate(mu, spect)


def test_network_registrar_checks_the_arm(tiny_model):
    model = RegistrationNet(tiny_model)
    with pytest.raises(ConfigError):
        NetworkRegistrar(model, Method.DENSENET)
    with pytest.raises(ConfigError):
        NetworkRegistrar(model, Method.MUTUAL_INFORMATION)
    assert NetworkRegistrar(model, Method.DENSENET_DUSFE).method is Method.DENSENET_DUSFE
