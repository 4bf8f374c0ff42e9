from sfereg.data.motion import (
    ManifestRecord,
    MotionRanges,
    SamplePair,
    Split,
    build_dataset,
    sample_params,
)
from sfereg.data.phantom import PhantomConfig, PhantomJitter, generate_cohort, generate_phantom

__all__ = [
    "ManifestRecord",
    "MotionRanges",
    "PhantomConfig",
    "PhantomJitter",
    "SamplePair",
    "Split",
    "build_dataset",
    "generate_cohort",
    "generate_phantom",
    "sample_params",
]
