from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from loguru import logger
from pydantic import BaseModel, Field, model_validator

from sfereg.errors import ConfigError, ShapeError
from sfereg.geometry.rigid import RigidParams, params_to_matrix, resample
from sfereg.geometry.volume import Volume, read_volume, write_volume
from sfereg.util import derive_seed, read_jsonl, write_jsonl


class MotionRanges(BaseModel):
    """Uniform misregistration ranges: translations in voxels, rotations in degrees."""

    max_t: tuple[float, float, float] = Field((8.0, 8.0, 4.0), description="|tx|, |ty|, |tz| limits")
    max_r: tuple[float, float, float] = Field((10.0, 10.0, 30.0), description="|ax|, |ay|, |az| limits")
    quantum: float = Field(0.01, gt=0, description="Sampling interval for every component")

    @model_validator(mode="after")
    def _check_ranges(self) -> "MotionRanges":
        for limit in (*self.max_t, *self.max_r):
            if limit <= 0:
                raise ValueError("Motion ranges must be positive")
            steps = limit / self.quantum
            if abs(steps - round(steps)) > 1e-6:
                raise ValueError(f"Range {limit} is not a multiple of the quantum {self.quantum}")
        return self

    @property
    def limits(self) -> np.ndarray:
        return np.array([*self.max_t, *self.max_r], dtype=np.float64)

    def contains(self, p: RigidParams) -> bool:
        return bool(np.all(np.abs(p.as_array()) <= self.limits + 1e-9))


class Split(str, Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"


@dataclass(frozen=True, eq=False)
class SamplePair:
    """One misregistered case. `mu_registered` is the aligned map the motion was applied to."""

    case_id: str
    seed: int
    truth: RigidParams
    spect: Volume
    mu_moved: Volume
    mu_registered: Volume


class ManifestRecord(BaseModel):
    case_id: str
    seed: int
    truth: list[float] = Field(..., min_length=6, max_length=6)
    spect_path: str
    mu_moved_path: str
    mu_path: str = Field(..., description="Registered mu-map the motion was applied to")
    split: Split


def quantize(values: np.ndarray, quantum: float) -> np.ndarray:
    """Round to the nearest multiple of `quantum`, halves away from zero."""
    return np.sign(values) * np.floor(np.abs(values) / quantum + 0.5) * quantum


def sample_params(ranges: MotionRanges, rng: np.random.Generator) -> RigidParams:
    limits = ranges.limits
    drawn = rng.uniform(-limits, limits)
    return RigidParams.from_array(np.clip(quantize(drawn, ranges.quantum), -limits, limits))


def make_sample(
    case_id: str, mu: Volume, spect: Volume, ranges: MotionRanges, master_seed: int
) -> SamplePair:
    seed = derive_seed(master_seed, case_id)
    truth = sample_params(ranges, np.random.default_rng(seed))
    mu_moved = resample(mu, params_to_matrix(truth, mu.dims))
    return SamplePair(case_id, seed, truth, spect, mu_moved, mu)


def case_id_for(pair_index: int, motion_index: int) -> str:
    return f"p{pair_index:04d}-m{motion_index}"


def build_dataset(
    registered_pairs: list[tuple[Volume, Volume]],
    per_case: int,
    ranges: MotionRanges,
    master_seed: int,
    jobs: int = 1,
) -> list[SamplePair]:
    """
    `per_case` random rigid motions of every registered mu-map.

    The SPECT volume is never moved. Each case draws from its own generator
    seeded by (master_seed, case_id), so the result does not depend on `jobs`.
    """
    if per_case < 1:
        raise ConfigError(f"per_case must be at least 1, got {per_case}")
    work = []
    for i, (mu, spect) in enumerate(registered_pairs):
        if not mu.same_grid(spect):
            raise ShapeError(
                f"Pair {i}: mu-map {mu.dims}/{mu.spacing_mm} and SPECT {spect.dims}/{spect.spacing_mm} differ"
            )
        for k in range(per_case):
            work.append((case_id_for(i, k), mu, spect))

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        samples = list(
            pool.map(lambda w: make_sample(w[0], w[1], w[2], ranges, master_seed), work)
        )
    logger.info(f"Built {len(samples)} misregistered cases from {len(registered_pairs)} pairs")
    return samples


def assign_splits(
    n_pairs: int, fractions: tuple[float, float, float], master_seed: int
) -> list[Split]:
    """Split by registered pair so both motions of one phantom land in the same split."""
    order = np.random.default_rng(derive_seed(master_seed, "splits")).permutation(n_pairs)
    n_train = int(round(fractions[0] * n_pairs))
    n_val = int(round(fractions[1] * n_pairs))
    splits = [Split.TEST] * n_pairs
    for rank, index in enumerate(order):
        if rank < n_train:
            splits[index] = Split.TRAIN
        elif rank < n_train + n_val:
            splits[index] = Split.VAL
    return splits


def write_dataset(
    samples: list[SamplePair],
    splits: dict[str, Split],
    volume_paths: dict[str, tuple[str, str]],
    out_dir: str | Path,
) -> list[ManifestRecord]:
    """
    Write every moved mu-map as VOLR and return manifest records.

    `volume_paths` maps case_id to the (mu, spect) files of its registered pair.
    """
    out_dir = Path(out_dir)
    records = []
    for sample in samples:
        mu_moved_path = write_volume(out_dir / f"{sample.case_id}_mu_moved.volr", sample.mu_moved)
        mu_path, spect_path = volume_paths[sample.case_id]
        records.append(
            ManifestRecord(
                case_id=sample.case_id,
                seed=sample.seed,
                truth=sample.truth.as_array().tolist(),
                spect_path=spect_path,
                mu_moved_path=str(mu_moved_path),
                mu_path=mu_path,
                split=splits[sample.case_id],
            )
        )
    return records


def write_manifest(path: str | Path, records: list[ManifestRecord]) -> None:
    write_jsonl(path, records)


def read_manifest(path: str | Path) -> list[ManifestRecord]:
    return read_jsonl(path, ManifestRecord)


def load_sample(record: ManifestRecord) -> SamplePair:
    return SamplePair(
        case_id=record.case_id,
        seed=record.seed,
        truth=RigidParams.from_array(record.truth),
        spect=read_volume(record.spect_path),
        mu_moved=read_volume(record.mu_moved_path),
        mu_registered=read_volume(record.mu_path),
    )


def verify_manifest(records: list[ManifestRecord], ranges: MotionRanges) -> list[str]:
    """Regenerate every case from its seed; return the case ids that do not match bit-exactly."""
    mismatched = []
    for record in records:
        truth = sample_params(ranges, np.random.default_rng(record.seed))
        mu = read_volume(record.mu_path)
        regenerated = resample(mu, params_to_matrix(truth, mu.dims)).data.astype("<f4")
        stored = read_volume(record.mu_moved_path).data
        if truth.as_array().tolist() != record.truth or not np.array_equal(regenerated, stored):
            mismatched.append(record.case_id)
    if mismatched:
        logger.warning(f"{len(mismatched)} manifest cases do not regenerate bit-exactly")
    return mismatched
