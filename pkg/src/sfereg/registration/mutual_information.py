"""
Classical baseline: rigid search maximizing mutual information between the
moved mu-map and the SPECT volume warped onto it.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from loguru import logger
from pydantic import BaseModel, Field
from scipy.ndimage import gaussian_filter
from scipy.stats import entropy

from sfereg.errors import ShapeError
from sfereg.geometry.rigid import RigidParams, params_to_matrix, resample
from sfereg.geometry.volume import Volume
from sfereg.registration.base import Method, Registrar
from sfereg.util import derive_seed


class MIConfig(BaseModel):
    bins: int = Field(32, ge=8, description="Histogram bins per axis")
    step_t: float = Field(2.0, gt=0, description="Initial translation step in voxels")
    step_r: float = Field(5.0, gt=0, description="Initial rotation step in degrees")
    shrink: float = Field(0.5, gt=0, lt=1, description="Step multiplier after a failed move")
    min_step_t: float = Field(0.05, gt=0)
    min_step_r: float = Field(0.05, gt=0)
    max_evals: int = Field(200, ge=1, description="Objective evaluations per restart")
    restarts: int = Field(4, ge=1, description="Searches run; the first starts at identity")
    start_t: float = Field(4.0, ge=0, description="Random starts lie within +-start_t voxels")
    start_r: float = Field(10.0, ge=0, description="Random starts lie within +-start_r degrees")
    smoothing: float = Field(1.0, ge=0, description="Gaussian sigma in voxels applied to both volumes before the search")
    seed: int = 0


def _bin_indices(
    data: np.ndarray, bins: int, value_range: tuple[float, float] | None = None
) -> np.ndarray | None:
    flat = data.astype(np.float64).ravel()
    lo, hi = value_range if value_range is not None else (flat.min(), flat.max())
    if hi <= lo:
        return None
    scaled = np.clip((flat - lo) / (hi - lo), 0.0, 1.0)
    return np.minimum((scaled * bins).astype(np.int64), bins - 1)


def mutual_information(a: Volume, b: Volume, bins: int = 32) -> float:
    """H(A) + H(B) - H(A,B) in bits, from a joint histogram of min-max normalized intensities."""
    if a.dims != b.dims:
        raise ShapeError(f"Cannot compare volumes of dims {a.dims} and {b.dims}")
    ia = _bin_indices(a.data, bins)
    ib = _bin_indices(b.data, bins)
    if ia is None or ib is None:
        logger.warning("Mutual information of a constant volume is defined as 0")
        return 0.0
    return _histogram_mi(ia, ib, bins)


def _histogram_mi(ia: np.ndarray, ib: np.ndarray, bins: int) -> float:
    joint = np.bincount(ia * bins + ib, minlength=bins * bins).reshape(bins, bins)
    # scipy drops empty cells from the entropy sums
    h_a = entropy(joint.sum(axis=1), base=2)
    h_b = entropy(joint.sum(axis=0), base=2)
    h_ab = entropy(joint.ravel(), base=2)
    return float(max(h_a + h_b - h_ab, 0.0))


def _smoothed(volume: Volume, sigma: float) -> Volume:
    if sigma <= 0:
        return volume
    return volume.with_data(gaussian_filter(volume.data.astype(np.float64), sigma, mode="constant"))


@dataclass(frozen=True)
class MIResult:
    params: RigidParams
    mi: float
    identity_mi: float
    improved: bool
    evaluations: int


def _descend(
    objective, start: np.ndarray, cfg: MIConfig
) -> tuple[np.ndarray, float, int]:
    """Shrinking-step coordinate ascent from `start`."""
    steps = np.array([cfg.step_t] * 3 + [cfg.step_r] * 3)
    min_steps = np.array([cfg.min_step_t] * 3 + [cfg.min_step_r] * 3)
    current = start.copy()
    best = objective(current)
    evals = 1
    while evals < cfg.max_evals and np.any(steps >= min_steps):
        for i in range(6):
            if steps[i] < min_steps[i] or evals >= cfg.max_evals:
                continue
            candidates = []
            for sign in (1.0, -1.0):
                trial = current.copy()
                trial[i] += sign * steps[i]
                candidates.append((objective(trial), trial))
                evals += 1
            value, trial = max(candidates, key=lambda c: c[0])
            if value > best:
                best, current = value, trial
            else:
                steps[i] *= cfg.shrink
    return current, best, evals


def register_mi(mu_moved: Volume, spect: Volume, cfg: MIConfig, jobs: int = 1) -> MIResult:
    """
    Multi-start search for the motion that best aligns `spect` onto `mu_moved`.

    The mu-map stays on its grid and only the smoothed SPECT is interpolated; bin ranges
    are fixed before the search. Falls back to identity, flagged, when no restart beats
    the identity alignment.
    """
    if mu_moved.dims != spect.dims:
        raise ShapeError(f"mu-map {mu_moved.dims} and SPECT {spect.dims} differ")

    fixed_bins = _bin_indices(_smoothed(mu_moved, cfg.smoothing).data, cfg.bins)
    moving = _smoothed(spect, cfg.smoothing)
    spect_range = (float(moving.data.min()), float(moving.data.max()))
    if fixed_bins is None or spect_range[1] <= spect_range[0]:
        logger.warning("MI search skipped: one of the volumes is constant")
        return MIResult(RigidParams(), 0.0, 0.0, False, 0)

    def objective(values: np.ndarray) -> float:
        warped = resample(moving, params_to_matrix(RigidParams.from_array(values), spect.dims))
        return _histogram_mi(fixed_bins, _bin_indices(warped.data, cfg.bins, spect_range), cfg.bins)

    rng = np.random.default_rng(derive_seed(cfg.seed, "mi-restarts"))
    half_width = np.array([cfg.start_t] * 3 + [cfg.start_r] * 3)
    starts = [np.zeros(6)] + [rng.uniform(-half_width, half_width) for _ in range(cfg.restarts - 1)]

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        outcomes = list(pool.map(lambda s: _descend(objective, s, cfg), starts))

    identity_mi = objective(np.zeros(6))
    evaluations = sum(o[2] for o in outcomes) + 1
    best_params, best_mi, _ = max(outcomes, key=lambda o: o[1])
    if best_mi <= identity_mi:
        logger.warning(f"MI search found nothing better than identity (MI {identity_mi:.4f} bits)")
        return MIResult(RigidParams(), identity_mi, identity_mi, False, evaluations)
    return MIResult(RigidParams.from_array(best_params), best_mi, identity_mi, True, evaluations)


class MutualInformationRegistrar(Registrar):
    method = Method.MUTUAL_INFORMATION

    def __init__(self, cfg: MIConfig, jobs: int = 1):
        self.cfg = cfg
        self.jobs = jobs

    def estimate(self, mu_moved: Volume, spect: Volume) -> RigidParams:
        return register_mi(mu_moved, spect, self.cfg, self.jobs).params
