"""Pipeline steps behind the CLI subcommands. Every artifact lives under the run directory."""

import re
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from loguru import logger
from pydantic import BaseModel, Field

from sfereg.config import ExperimentConfig
from sfereg.data.motion import (
    ManifestRecord,
    SamplePair,
    Split,
    assign_splits,
    build_dataset,
    case_id_for,
    load_sample,
    read_manifest,
    verify_manifest,
    write_dataset,
    write_manifest,
)
from sfereg.data.phantom import cohort_configs, generate_phantom
from sfereg.errors import ConfigError, MissingArtifactError, NumericalError
from sfereg.evaluation.metrics import CaseResult, MethodSummary, aggregate, evaluate_case
from sfereg.evaluation.report import markdown_table, seed_table, write_csv, write_notebook, write_seed_csv
from sfereg.geometry.rigid import RigidParams
from sfereg.geometry.volume import read_volume, write_volume
from sfereg.network.regnet import RegistrationNet
from sfereg.network.training import train
from sfereg.registration.base import Method, register
from sfereg.registration.registry import build_registrar
from sfereg.util import model_digest, read_jsonl, write_jsonl


class CohortRecord(BaseModel):
    index: int
    seed: int = Field(..., description="Noise seed of this member")
    config_digest: str
    mu_path: str
    spect_path: str


class PredictionRecord(BaseModel):
    case_id: str
    method: Method
    predicted: list[float] = Field(..., min_length=6, max_length=6)
    registered_path: str


class TrainSummary(BaseModel):
    method: Method
    parameter_count: int
    dusfe_parameter_count: int
    epochs: int
    best_epoch: int
    best_val_dT: float
    checkpoint: str


def cohort_manifest_path(cfg: ExperimentConfig) -> Path:
    return cfg.data_dir / "cohort.jsonl"


def dataset_manifest_path(cfg: ExperimentConfig) -> Path:
    return cfg.data_dir / "manifest.jsonl"


def checkpoint_path(cfg: ExperimentConfig, method: Method) -> Path:
    return cfg.run_dir / "models" / method.value / "best.ckpt.json"


def predictions_path(cfg: ExperimentConfig, method: Method) -> Path:
    return cfg.run_dir / "predictions" / f"{method.value}.jsonl"


def summary_path(cfg: ExperimentConfig, method: Method) -> Path:
    return checkpoint_path(cfg, method).parent / "summary.json"


def results_path(cfg: ExperimentConfig) -> Path:
    return cfg.run_dir / "results" / "cases.jsonl"


def prepare_run_dir(cfg: ExperimentConfig) -> Path:
    try:
        cfg.data_dir.mkdir(parents=True, exist_ok=True)
        with open(cfg.run_dir / "config.json", "w", encoding="utf-8") as f:
            f.write(cfg.model_dump_json(indent=2))
    except OSError as e:
        raise ConfigError(f"Run directory {cfg.run_dir} is not writable: {e}") from e
    return cfg.run_dir


def cmd_phantom(cfg: ExperimentConfig) -> list[CohortRecord]:
    prepare_run_dir(cfg)
    out_dir = cfg.data_dir / "cohort"
    out_dir.mkdir(parents=True, exist_ok=True)
    configs = cohort_configs(cfg.n_phantoms, cfg.phantom, cfg.jitter, cfg.master_seed)

    def build(index: int) -> CohortRecord:
        member = configs[index]
        mu, spect = generate_phantom(member)
        return CohortRecord(
            index=index,
            seed=member.seed,
            config_digest=model_digest(member),
            mu_path=str(write_volume(out_dir / f"phantom{index:04d}_mu.volr", mu)),
            spect_path=str(write_volume(out_dir / f"phantom{index:04d}_spect.volr", spect)),
        )

    with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
        records = list(pool.map(build, range(len(configs))))
    write_jsonl(cohort_manifest_path(cfg), records)
    logger.info(f"Wrote {len(records)} phantoms to {out_dir}")
    return records


def cmd_simulate(cfg: ExperimentConfig) -> list[ManifestRecord]:
    prepare_run_dir(cfg)
    cohort_path = cohort_manifest_path(cfg)
    if not cohort_path.exists():
        raise ConfigError(f"No phantom cohort at {cohort_path}; run the phantom step first")
    cohort = read_jsonl(cohort_path, CohortRecord)
    pairs = [(read_volume(c.mu_path), read_volume(c.spect_path)) for c in cohort]
    samples = build_dataset(pairs, cfg.per_case, cfg.motion, cfg.master_seed, cfg.jobs)

    pair_splits = assign_splits(len(cohort), cfg.splits.fractions(), cfg.master_seed)
    splits: dict[str, Split] = {}
    volume_paths: dict[str, tuple[str, str]] = {}
    for i, member in enumerate(cohort):
        for k in range(cfg.per_case):
            case_id = case_id_for(i, k)
            splits[case_id] = pair_splits[i]
            volume_paths[case_id] = (member.mu_path, member.spect_path)

    records = write_dataset(samples, splits, volume_paths, cfg.data_dir / "cases")
    write_manifest(dataset_manifest_path(cfg), records)
    counts = {s.value: sum(r.split is s for r in records) for s in Split}
    logger.info(f"Dataset manifest {dataset_manifest_path(cfg)}: {counts}")

    mismatched = verify_manifest(records, cfg.motion)
    if mismatched:
        raise NumericalError(f"Cases do not regenerate from their seeds: {mismatched[:5]}")
    return records


def _load_split(cfg: ExperimentConfig, split: Split) -> list[SamplePair]:
    path = dataset_manifest_path(cfg)
    if not path.exists():
        raise MissingArtifactError(f"No dataset manifest at {path}; run the simulate step first")
    return [load_sample(r) for r in read_manifest(path) if r.split is split]


def cmd_train(cfg: ExperimentConfig) -> list[TrainSummary]:
    """Trains every configured learned method; with both configured this is the DuSFE ablation."""
    prepare_run_dir(cfg)
    learned = [m for m in cfg.methods if m.learned]
    if not learned:
        logger.info("No learned methods configured, nothing to train")
        return []
    train_set = _load_split(cfg, Split.TRAIN)
    val_set = _load_split(cfg, Split.VAL)

    summaries = []
    for method in learned:
        model_cfg = cfg.model.model_copy(update={"use_dusfe": method is Method.DENSENET_DUSFE})
        model = RegistrationNet(model_cfg)
        out_dir = checkpoint_path(cfg, method).parent
        logger.info(f"Training {method.value}")
        result = train(train_set, val_set, model, cfg.train, out_dir)
        summary = TrainSummary(
            method=method,
            parameter_count=model.parameter_count(),
            dusfe_parameter_count=model.dusfe_parameter_count(),
            epochs=len(result.history),
            best_epoch=result.best_epoch,
            best_val_dT=result.best_val_dT,
            checkpoint=str(checkpoint_path(cfg, method)),
        )
        with open(summary_path(cfg, method), "w", encoding="utf-8") as f:
            f.write(summary.model_dump_json(indent=2))
        summaries.append(summary)
    return summaries


def _run_method(cfg: ExperimentConfig, method: Method, test_set: list[SamplePair]) -> list[PredictionRecord]:
    checkpoints = {m: checkpoint_path(cfg, m) for m in Method if m.learned}
    registrar = build_registrar(method, cfg.mi, checkpoints, jobs=1)
    out_dir = predictions_path(cfg, method).with_suffix("")
    out_dir.mkdir(parents=True, exist_ok=True)

    def run(sample: SamplePair) -> PredictionRecord:
        predicted, registered = register(sample.mu_moved, sample.spect, registrar)
        path = write_volume(out_dir / f"{sample.case_id}_mu_registered.volr", registered)
        return PredictionRecord(
            case_id=sample.case_id,
            method=method,
            predicted=predicted.as_array().tolist(),
            registered_path=str(path),
        )

    with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
        records = list(pool.map(run, test_set))
    write_jsonl(predictions_path(cfg, method), records)
    logger.info(f"{method.value}: registered {len(records)} test cases")
    return records


def cmd_register(cfg: ExperimentConfig) -> dict[Method, list[PredictionRecord]]:
    prepare_run_dir(cfg)
    test_set = _load_split(cfg, Split.TEST)
    return {method: _run_method(cfg, method, test_set) for method in cfg.methods}


def cmd_evaluate(cfg: ExperimentConfig) -> dict[str, MethodSummary]:
    prepare_run_dir(cfg)
    test_set = _load_split(cfg, Split.TEST)
    if not test_set:
        raise ConfigError("The test split is empty")
    by_case = {s.case_id: s for s in test_set}

    results: list[CaseResult] = []
    for method in cfg.methods:
        for record in _run_method(cfg, method, test_set):
            sample = by_case[record.case_id]
            results.append(
                evaluate_case(
                    record.case_id,
                    method.value,
                    RigidParams.from_array(record.predicted),
                    sample.truth,
                    read_volume(record.registered_path),
                    sample.mu_registered,
                )
            )
    write_jsonl(results_path(cfg), results)
    summaries = _with_parameter_counts(cfg, aggregate(results))
    table = markdown_table(summaries)
    (results_path(cfg).parent / "table.md").write_text(table, encoding="utf-8")
    logger.info(f"Test-set comparison:\n{table}")
    return summaries


def _with_parameter_counts(cfg: ExperimentConfig, summaries: dict[str, MethodSummary]) -> dict[str, MethodSummary]:
    for method in Method:
        path = summary_path(cfg, method)
        if method.learned and method.value in summaries and path.exists():
            trained = TrainSummary.model_validate_json(path.read_text(encoding="utf-8"))
            summaries[method.value].parameter_count = trained.parameter_count
    return summaries


def _seed_summaries(cfg: ExperimentConfig) -> dict[int, dict[str, MethodSummary]]:
    """Aggregated results of every seed<N> run under the sweep directory."""
    per_seed = {}
    for path in sorted(cfg.sweep_dir.glob("seed*/results/cases.jsonl")):
        match = re.fullmatch(r"seed(\d+)", path.parents[1].name)
        if match is None:
            continue
        results = read_jsonl(path, CaseResult)
        if results:
            per_seed[int(match.group(1))] = aggregate(results)
    return per_seed


def cmd_report(cfg: ExperimentConfig) -> Path:
    """
    Writes the comparison table, CSV and notebook for this run. Run without --seed,
    it also lists the mean ΔT of every seed<N> run, one row per seed.
    """
    path = results_path(cfg)
    per_seed = _seed_summaries(cfg) if cfg.sweep_seed is None else {}
    if not path.exists() and not per_seed:
        raise MissingArtifactError(f"No evaluation results at {path}; run the evaluate step first")
    out_dir = cfg.run_dir / "report"
    out_dir.mkdir(parents=True, exist_ok=True)

    if path.exists():
        results = read_jsonl(path, CaseResult)
        summaries = _with_parameter_counts(cfg, aggregate(results))
        (out_dir / "table.md").write_text(markdown_table(summaries), encoding="utf-8")
        write_csv(out_dir / "table.csv", summaries)
        write_notebook(out_dir / "report.ipynb", cfg.run_name, summaries, results)
    if per_seed:
        table = seed_table(per_seed)
        (out_dir / "seeds.md").write_text(table, encoding="utf-8")
        write_seed_csv(out_dir / "seeds.csv", per_seed)
        logger.info(f"Per-seed comparison over {len(per_seed)} seeds:\n{table}")
    logger.info(f"Report written to {out_dir}")
    return out_dir
