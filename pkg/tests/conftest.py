import numpy as np
import pytest
from scipy.ndimage import gaussian_filter

from sfereg.data.phantom import PhantomConfig, generate_phantom
from sfereg.geometry.volume import Volume
from sfereg.network.regnet import ModelConfig
from sfereg.tensor.tensor import precision


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def float64():
    with precision(np.float64):
        yield


@pytest.fixture
def desk_phantom() -> PhantomConfig:
    return PhantomConfig().scaled(0.5, (32, 32, 32))


@pytest.fixture
def tiny_phantom() -> PhantomConfig:
    """16^3 phantom without noise, small enough for network tests."""
    return PhantomConfig().scaled(0.25, (16, 16, 16)).model_copy(update={"noise_level": 0.0})


@pytest.fixture
def tiny_model() -> ModelConfig:
    return ModelConfig(
        input_dims=(16, 16, 16),
        level_widths=(2, 4, 4),
        dense_layers=1,
        registration_widths=(4,),
        fc_widths=(8,),
        seed=3,
    )


@pytest.fixture(scope="session")
def band_limited_pair() -> tuple[Volume, Volume]:
    """
    Full-size anatomy centered in a 96^3 grid with a blurred mu-map.

    Every motion inside the full ranges keeps the content on the grid, and the blur keeps
    two trilinear passes within a few percent of the original.
    """
    mu, spect = generate_phantom(PhantomConfig(dims=(96, 96, 96), noise_level=0.0))
    return mu.with_data(gaussian_filter(mu.data, 2.0).astype(np.float32)), spect
