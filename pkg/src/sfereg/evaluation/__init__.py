from sfereg.evaluation.metrics import (
    METRIC_NAMES,
    CaseResult,
    MethodSummary,
    MetricSummary,
    aggregate,
    delta_r,
    delta_t,
    evaluate_case,
    nmse_nmae,
)

__all__ = [
    "METRIC_NAMES",
    "CaseResult",
    "MethodSummary",
    "MetricSummary",
    "aggregate",
    "delta_r",
    "delta_t",
    "evaluate_case",
    "nmse_nmae",
]
