import numpy as np
import pytest

from sfereg.data.phantom import generate_phantom
from sfereg.errors import ShapeError
from sfereg.geometry.rigid import RigidParams, params_to_matrix, resample
from sfereg.geometry.volume import Volume
from sfereg.registration.mutual_information import MIConfig, MutualInformationRegistrar, mutual_information, register_mi

FAST = MIConfig(restarts=2, max_evals=150)


def test_two_symbol_volume_carries_one_bit():
    data = np.zeros((4, 4, 4))
    data[:2] = 1.0
    v = Volume(data)
    assert mutual_information(v, v) == pytest.approx(1.0)


def test_constant_volume_gives_zero(rng):
    v = Volume(rng.uniform(size=(8, 8, 8)))
    assert mutual_information(Volume(np.full((8, 8, 8), 3.0)), v) == 0.0


def test_symmetric_and_bounded(rng):
    a = Volume(rng.uniform(size=(10, 10, 10)))
    b = a.with_data(a.data**2 + rng.uniform(0, 0.1, size=a.data.shape))
    ab, ba = mutual_information(a, b), mutual_information(b, a)
    assert ab == pytest.approx(ba)
    assert 0 <= ab <= min(mutual_information(a, a), mutual_information(b, b)) + 1e-9


def test_independent_volumes_share_little_information(rng):
    a = Volume(rng.uniform(size=(32, 32, 32)))
    b = Volume(rng.uniform(size=(32, 32, 32)))
    assert mutual_information(a, b) <= 0.05


def test_dims_mismatch(rng):
    with pytest.raises(ShapeError):
        mutual_information(Volume(np.ones((4, 4, 4))), Volume(np.ones((4, 4, 5))))


@pytest.fixture
def clean_pair(desk_phantom):
    return generate_phantom(desk_phantom.model_copy(update={"noise_level": 0.0}))


def test_aligned_pair_stays_near_identity(clean_pair):
    mu, spect = clean_pair
    result = register_mi(mu, spect, FAST)
    assert np.all(np.abs(result.params.translation) <= 0.5)
    assert np.all(np.abs(result.params.rotation) <= 0.5)


def test_translation_is_recovered(clean_pair):
    mu, spect = clean_pair
    truth = RigidParams(tx=3.0)
    moved = resample(mu, params_to_matrix(truth, mu.dims))
    result = register_mi(moved, spect, FAST)
    assert result.improved
    assert result.mi > result.identity_mi
    np.testing.assert_allclose(result.params.translation, truth.translation, atol=1.0)


def test_search_is_deterministic_across_jobs(clean_pair):
    mu, spect = clean_pair
    moved = resample(mu, params_to_matrix(RigidParams(ty=-2.0, az=4.0), mu.dims))
    a = register_mi(moved, spect, FAST, jobs=1)
    b = register_mi(moved, spect, FAST, jobs=2)
    assert a == b


def test_registrar_wraps_search(clean_pair):
    mu, spect = clean_pair
    registrar = MutualInformationRegistrar(FAST)
    assert registrar.method.value == "mutual_information"
    assert registrar.estimate(mu, spect) == register_mi(mu, spect, FAST).params


def test_rotation_is_recovered(clean_pair):
    mu, spect = clean_pair
    truth = RigidParams(az=6.0)
    moved = resample(mu, params_to_matrix(truth, mu.dims))
    result = register_mi(moved, spect, FAST)
    assert result.improved
    assert result.params.az == pytest.approx(6.0, abs=1.0)


def test_constant_volume_falls_back_to_identity(clean_pair):
    mu, _ = clean_pair
    result = register_mi(mu, Volume(np.zeros(mu.data.shape)), FAST)
    assert result.params == RigidParams() and not result.improved
