import json
from pathlib import Path
from typing import Any

import numpy as np
from loguru import logger

from sfereg.errors import MissingArtifactError, ShapeError
from sfereg.tensor.optim import Parameter

CHECKPOINT_FORMAT = "sfereg-ckpt/1"


def _blob_path(index_path: Path) -> Path:
    return index_path.with_suffix(".bin")


def save_checkpoint(
    path: str | Path,
    params: list[Parameter],
    meta: dict[str, Any] | None = None,
) -> Path:
    """
    Write a JSON index next to one raw little-endian float32 blob.

    The index maps every parameter name to its shape, byte offset and element count.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tensors: dict[str, dict[str, Any]] = {}
    offset = 0
    with open(_blob_path(path), "wb") as blob:
        for p in params:
            if p.name in tensors:
                raise ShapeError(f"Duplicate parameter name {p.name} in checkpoint")
            payload = np.ascontiguousarray(p.data, dtype="<f4").tobytes()
            tensors[p.name] = {"shape": list(p.shape), "offset": offset, "count": p.size}
            blob.write(payload)
            offset += len(payload)

    index = {
        "format": CHECKPOINT_FORMAT,
        "blob": _blob_path(path).name,
        "meta": meta or {},
        "tensors": tensors,
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(index, f, indent=2)
    logger.debug(f"Wrote checkpoint {path} ({len(tensors)} tensors, {offset} bytes)")
    return path


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"Checkpoint not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        index = json.load(f)
    if index.get("format") != CHECKPOINT_FORMAT:
        raise ShapeError(f"{path} is not a {CHECKPOINT_FORMAT} checkpoint")

    raw = _blob_path(path).read_bytes()
    arrays: dict[str, np.ndarray] = {}
    for name, entry in index["tensors"].items():
        flat = np.frombuffer(raw, dtype="<f4", count=entry["count"], offset=entry["offset"])
        arrays[name] = flat.reshape(entry["shape"]).astype(np.float32)
    return arrays, index["meta"]
