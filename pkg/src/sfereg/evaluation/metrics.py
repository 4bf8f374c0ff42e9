from collections import defaultdict

import numpy as np
from loguru import logger
from pydantic import BaseModel, Field

from sfereg.errors import ShapeError
from sfereg.geometry.rigid import RigidParams
from sfereg.geometry.volume import DEFAULT_SPACING_MM, Volume

METRIC_NAMES = ("dT_mm", "dR_deg", "nmse_mu", "nmae_mu")


def delta_t(pred: RigidParams, truth: RigidParams, spacing_mm: float = DEFAULT_SPACING_MM) -> float:
    """Mean absolute translation error over x, y, z, reported in mm."""
    return float(np.mean(np.abs(pred.translation - truth.translation)) * spacing_mm)


def delta_r(pred: RigidParams, truth: RigidParams) -> float:
    """Mean absolute rotation error over the three axes, in degrees."""
    return float(np.mean(np.abs(pred.rotation - truth.rotation)))


def nmse_nmae(x: Volume, ref: Volume) -> tuple[float, float]:
    """Errors normalized by the reference: sum of squares for NMSE, sum of magnitudes for NMAE."""
    if x.dims != ref.dims:
        raise ShapeError(f"Cannot compare volumes of dims {x.dims} and {ref.dims}")
    a = x.data.astype(np.float64)
    r = ref.data.astype(np.float64)
    if not np.any(r):
        raise ShapeError("Reference volume is identically zero")
    diff = a - r
    return float(np.sum(diff**2) / np.sum(r**2)), float(np.sum(np.abs(diff)) / np.sum(np.abs(r)))


class CaseResult(BaseModel):
    case_id: str
    method: str
    predicted: list[float] = Field(..., min_length=6, max_length=6)
    truth: list[float] = Field(..., min_length=6, max_length=6)
    dT_mm: float = Field(..., ge=0)
    dR_deg: float = Field(..., ge=0)
    nmse_mu: float = Field(..., ge=0)
    nmae_mu: float = Field(..., ge=0)
    component_errors: list[float] = Field(
        ..., min_length=6, max_length=6, description="Signed predicted - truth per parameter"
    )


def evaluate_case(
    case_id: str,
    method: str,
    predicted: RigidParams,
    truth: RigidParams,
    registered: Volume,
    reference: Volume,
) -> CaseResult:
    nmse, nmae = nmse_nmae(registered, reference)
    return CaseResult(
        case_id=case_id,
        method=method,
        predicted=predicted.as_array().tolist(),
        truth=truth.as_array().tolist(),
        dT_mm=delta_t(predicted, truth, reference.spacing_mm[0]),
        dR_deg=delta_r(predicted, truth),
        nmse_mu=nmse,
        nmae_mu=nmae,
        component_errors=(predicted.as_array() - truth.as_array()).tolist(),
    )


class MetricSummary(BaseModel):
    mean: float
    std: float


class MethodSummary(BaseModel):
    method: str
    n: int
    metrics: dict[str, MetricSummary]
    single_case: bool = Field(False, description="std is reported as 0 because n == 1")
    parameter_count: int | None = Field(None, description="Trainable parameters of a learned method")


def aggregate(results: list[CaseResult]) -> dict[str, MethodSummary]:
    """Mean and sample (n-1) standard deviation of every metric, per method."""
    if not results:
        raise ShapeError("Cannot aggregate an empty result list")
    grouped: dict[str, list[CaseResult]] = defaultdict(list)
    for r in results:
        grouped[r.method].append(r)

    summaries = {}
    for method, cases in grouped.items():
        single = len(cases) == 1
        if single:
            logger.warning(f"{method}: one case only, std reported as 0")
        metrics = {}
        for name in METRIC_NAMES:
            values = np.array([getattr(c, name) for c in cases])
            std = 0.0 if single else float(np.std(values, ddof=1))
            metrics[name] = MetricSummary(mean=float(values.mean()), std=std)
        summaries[method] = MethodSummary(method=method, n=len(cases), metrics=metrics, single_case=single)
    return summaries
