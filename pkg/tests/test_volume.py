import numpy as np
import pytest

from sfereg.errors import ConfigError, MissingArtifactError, ShapeError
from sfereg.geometry.volume import Modality, Volume, read_volume, write_volume


def test_round_trip_is_bit_exact(tmp_path, rng):
    vol = Volume(rng.uniform(0, 2, size=(4, 5, 6)).astype(np.float32), (6.8, 6.8, 3.4), Modality.SPECT)
    back = read_volume(write_volume(tmp_path / "v.volr", vol))
    np.testing.assert_array_equal(back.data, vol.data)
    assert back.dims == (6, 5, 4)
    assert back.spacing_mm == (6.8, 6.8, 3.4)
    assert back.modality is Modality.SPECT


def test_layout_is_header_line_then_x_fastest_payload(tmp_path):
    data = np.arange(24, dtype=np.float32).reshape(2, 3, 4)
    path = write_volume(tmp_path / "v.volr", Volume(data))
    raw = path.read_bytes()
    header, payload = raw.split(b"\n", 1)
    assert b'"magic":"VOLR1"' in header
    assert b'"dims":[4,3,2]' in header
    values = np.frombuffer(payload, dtype="<f4")
    # x varies fastest: the first two values are (x=0, y=0, z=0) and (x=1, y=0, z=0)
    np.testing.assert_array_equal(values[:4], data[0, 0, :])
    assert len(payload) == 24 * 4


def test_volume_checks():
    with pytest.raises(ShapeError):
        Volume(np.zeros((3, 3)))
    with pytest.raises(ShapeError):
        Volume(-np.ones((2, 2, 2)))


def test_read_errors(tmp_path):
    with pytest.raises(MissingArtifactError):
        read_volume(tmp_path / "missing.volr")
    (tmp_path / "bad.volr").write_bytes(b'{"magic":"NOPE"}\n')
    with pytest.raises(ConfigError):
        read_volume(tmp_path / "bad.volr")
    good = write_volume(tmp_path / "short.volr", Volume(np.ones((2, 2, 2), dtype=np.float32)))
    good.write_bytes(good.read_bytes()[:-4])
    with pytest.raises(ShapeError):
        read_volume(good)
