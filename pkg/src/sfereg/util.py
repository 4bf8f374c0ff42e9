import hashlib
import json
from pathlib import Path

from pydantic import BaseModel


def file_digest(file_path: str | Path) -> str:
    with open(file_path, "rb") as file:
        return hashlib.sha256(file.read()).hexdigest()


def derive_seed(master_seed: int, key: str | int) -> int:
    """64-bit seed for one case, stable across runs and platforms."""
    digest = hashlib.sha256(f"{master_seed}:{key}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def model_digest(model: BaseModel) -> str:
    payload = json.dumps(model.model_dump(mode="json"), sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def write_jsonl(path: str | Path, records: list[BaseModel]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for record in records:
            f.write(record.model_dump_json())
            f.write("\n")


def read_jsonl[M: BaseModel](path: str | Path, model: type[M]) -> list[M]:
    with open(path, "r", encoding="utf-8") as f:
        return [model.model_validate_json(line) for line in f if line.strip()]
