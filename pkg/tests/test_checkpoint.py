import json

import numpy as np
import pytest

from sfereg.errors import MissingArtifactError, ShapeError
from sfereg.tensor.checkpoint import load_checkpoint, save_checkpoint
from sfereg.tensor.optim import Parameter
from sfereg.tensor.tensor import Tensor


def params(rng):
    return [
        Parameter("stream1.block1.dense.layer0.weight", Tensor(rng.normal(size=(2, 1, 3, 3, 3)), requires_grad=True)),
        Parameter("head.fc0.bias", Tensor(rng.normal(size=6), requires_grad=True)),
    ]


def test_round_trip_is_bit_exact(tmp_path, rng):
    saved = params(rng)
    path = save_checkpoint(tmp_path / "best.ckpt.json", saved, {"epoch": 7})
    arrays, meta = load_checkpoint(path)
    assert meta == {"epoch": 7}
    assert list(arrays) == [p.name for p in saved]
    for p in saved:
        assert arrays[p.name].dtype == np.float32
        np.testing.assert_array_equal(arrays[p.name], p.data)


def test_index_layout(tmp_path, rng):
    path = save_checkpoint(tmp_path / "m.ckpt.json", params(rng))
    index = json.loads(path.read_text())
    assert index["format"] == "sfereg-ckpt/1"
    first, second = index["tensors"].values()
    assert first == {"shape": [2, 1, 3, 3, 3], "offset": 0, "count": 54}
    assert second["offset"] == 54 * 4
    assert (tmp_path / index["blob"]).stat().st_size == (54 + 6) * 4


def test_duplicate_names_rejected(tmp_path, rng):
    p = params(rng)[0]
    with pytest.raises(ShapeError):
        save_checkpoint(tmp_path / "dup.ckpt.json", [p, p])


def test_missing_checkpoint(tmp_path):
    with pytest.raises(MissingArtifactError):
        load_checkpoint(tmp_path / "nope.ckpt.json")
