import json
from pathlib import Path

from loguru import logger
from pydantic import BaseModel, Field, ValidationError, model_validator

from sfereg.data.motion import MotionRanges
from sfereg.data.phantom import PhantomConfig, PhantomJitter
from sfereg.errors import ConfigError
from sfereg.network.regnet import ModelConfig
from sfereg.network.training import TrainConfig
from sfereg.registration.base import Method
from sfereg.registration.mutual_information import MIConfig

DESK_DIMS = (32, 32, 32)


class SplitConfig(BaseModel):
    """Fractions of registered pairs per split; both motions of a pair share its split."""

    train: float = Field(4 / 9, ge=0, le=1)
    val: float = Field(1 / 9, ge=0, le=1)
    test: float = Field(4 / 9, ge=0, le=1)

    @model_validator(mode="after")
    def _check_sum(self) -> "SplitConfig":
        if abs(self.train + self.val + self.test - 1.0) > 1e-6:
            raise ValueError(f"Split fractions sum to {self.train + self.val + self.test}, not 1")
        return self

    def fractions(self) -> tuple[float, float, float]:
        return self.train, self.val, self.test


class PathsConfig(BaseModel):
    output_dir: str = Field("runs", description="Parent of every run directory")
    data_dir: str = Field("data", description="Cohort and dataset location inside the run directory")


class ExperimentConfig(BaseModel):
    """
    One complete experiment. Defaults are the full-scale settings;
    `desk_scale()` shrinks them to something a laptop trains in hours.
    """

    run_name: str = Field("dusfe", description="Run directory name under paths.output_dir")
    master_seed: int = Field(0, description="Seed every random choice derives from")
    jobs: int = Field(1, ge=1, description="Worker threads for per-case parallelism")
    paths: PathsConfig = Field(default_factory=PathsConfig)
    phantom: PhantomConfig = Field(default_factory=PhantomConfig)
    jitter: PhantomJitter = Field(default_factory=PhantomJitter)
    n_phantoms: int = Field(450, ge=1, description="Registered pairs in the cohort")
    motion: MotionRanges = Field(default_factory=MotionRanges)
    per_case: int = Field(2, ge=1, description="Random motions simulated per registered pair")
    splits: SplitConfig = Field(default_factory=SplitConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    mi: MIConfig = Field(default_factory=MIConfig)
    methods: list[Method] = Field(default_factory=lambda: list(Method), description="Methods to train and evaluate")
    sweep_seed: int | None = Field(None, description="Set by --seed; the run then lives in <run_name>/seed<N>")

    @model_validator(mode="after")
    def _check_grids(self) -> "ExperimentConfig":
        if self.model.input_dims != self.phantom.dims:
            raise ValueError(f"model.input_dims {self.model.input_dims} != phantom.dims {self.phantom.dims}")
        if not self.methods:
            raise ValueError("At least one method must be configured")
        return self

    @property
    def sweep_dir(self) -> Path:
        """Parent of the per-seed run directories."""
        return Path(self.paths.output_dir) / self.run_name

    @property
    def run_dir(self) -> Path:
        if self.sweep_seed is None:
            return self.sweep_dir
        return self.sweep_dir / f"seed{self.sweep_seed}"

    @property
    def data_dir(self) -> Path:
        return self.run_dir / self.paths.data_dir

    def desk_scale(self) -> "ExperimentConfig":
        if self.phantom.dims == DESK_DIMS:
            logger.warning(f"Config is already at desk scale {DESK_DIMS}, leaving it unchanged")
            return self
        return self.model_copy(
            update={
                "phantom": self.phantom.scaled(0.5, DESK_DIMS),
                "motion": MotionRanges(max_t=(4.0, 4.0, 2.0), max_r=(5.0, 5.0, 15.0), quantum=self.motion.quantum),
                "n_phantoms": 80,
                "per_case": 2,
                "splits": SplitConfig(train=0.625, val=0.125, test=0.25),
                "model": self.model.model_copy(update={"input_dims": DESK_DIMS}),
                "train": self.train.model_copy(update={"epochs": 60, "lr": 2e-4}),
            }
        )

    def with_overrides(
        self,
        seed: int | None = None,
        jobs: int | None = None,
        methods: list[Method] | None = None,
    ) -> "ExperimentConfig":
        update: dict = {}
        if seed is not None:
            update["master_seed"] = seed
            update["sweep_seed"] = seed
            update["model"] = self.model.model_copy(update={"seed": seed})
            update["train"] = self.train.model_copy(update={"seed": seed})
            update["mi"] = self.mi.model_copy(update={"seed": seed})
        if jobs is not None:
            if jobs < 1:
                raise ConfigError(f"--jobs must be at least 1, got {jobs}")
            update["jobs"] = jobs
        if methods is not None:
            update["methods"] = methods
        return self.model_copy(update=update)


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Config file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
        return ExperimentConfig.model_validate(raw)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path} is not valid JSON: {e}") from e
    except ValidationError as e:
        raise ConfigError(f"Invalid config {path}:\n{e}") from e
