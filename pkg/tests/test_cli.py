import json

import pytest

from sfereg.cli import main
from sfereg.data.phantom import PhantomConfig
from sfereg.util import file_digest


@pytest.fixture
def config_path(tmp_path, tiny_model):
    cfg = {
        "run_name": "tiny",
        "master_seed": 1,
        "jobs": 2,
        "paths": {"output_dir": str(tmp_path / "runs")},
        "phantom": PhantomConfig().scaled(0.25, (16, 16, 16)).model_dump(mode="json"),
        "n_phantoms": 3,
        "motion": {"max_t": [2.0, 2.0, 1.0], "max_r": [5.0, 5.0, 10.0]},
        "per_case": 2,
        "splits": {"train": 1 / 3, "val": 1 / 3, "test": 1 / 3},
        "model": tiny_model.model_dump(mode="json"),
        "train": {"epochs": 2, "lr": 1e-3, "batch_size": 2},
        "mi": {"restarts": 1, "max_evals": 30},
        "methods": ["baseline_motion", "densenet_dusfe"],
    }
    path = tmp_path / "experiment.json"
    path.write_text(json.dumps(cfg))
    return path


def run(*argv) -> int:
    try:
        main([str(a) for a in argv])
    except SystemExit as e:
        return e.code
    return 0


def test_missing_config_exits_2(tmp_path):
    assert run("phantom", "--config", tmp_path / "nope.json") == 2


def test_unknown_method_exits_2(config_path):
    assert run("evaluate", "--config", config_path, "--method", "elastix") == 2


def test_bad_jobs_exits_2(config_path):
    assert run("phantom", "--config", config_path, "--jobs", "0") == 2


def test_missing_artifacts(config_path):
    assert run("simulate", "--config", config_path) == 2
    assert run("register", "--config", config_path) == 3
    assert run("report", "--config", config_path) == 3


def test_phantom_step_is_reproducible(tmp_path, config_path):
    cohort = tmp_path / "runs" / "tiny" / "data" / "cohort"
    assert run("phantom", "--config", config_path) == 0
    first = {p.name: file_digest(p) for p in cohort.iterdir()}
    assert run("phantom", "--config", config_path, "--jobs", "1") == 0
    second = {p.name: file_digest(p) for p in cohort.iterdir()}
    assert len(first) == 6
    assert first == second


def test_baseline_pipeline(tmp_path, config_path):
    run_dir = tmp_path / "runs" / "tiny"
    assert run("phantom", "--config", config_path) == 0
    assert run("simulate", "--config", config_path) == 0
    manifest = (run_dir / "data" / "manifest.jsonl").read_text().splitlines()
    assert len(manifest) == 6
    assert sorted(json.loads(line)["split"] for line in manifest) == ["test", "test", "train", "train", "val", "val"]

    assert run("evaluate", "--config", config_path, "--method", "baseline_motion") == 0
    assert run("report", "--config", config_path) == 0
    table = (run_dir / "report" / "table.md").read_text(encoding="utf-8").splitlines()
    assert [line.split(" | ")[0] for line in table[2:]] == ["| baseline_motion"]
    assert (run_dir / "report" / "table.csv").exists()
    assert (run_dir / "report" / "report.ipynb").exists()
    assert (run_dir / "sfereg.log").exists()


def test_evaluating_an_untrained_network_exits_3(config_path):
    assert run("phantom", "--config", config_path) == 0
    assert run("simulate", "--config", config_path) == 0
    assert run("evaluate", "--config", config_path, "--method", "densenet_dusfe") == 3


def test_train_then_evaluate(tmp_path, config_path):
    run_dir = tmp_path / "runs" / "tiny"
    for step in ("phantom", "simulate", "train", "evaluate"):
        assert run(step, "--config", config_path) == 0, step
    summary = json.loads((run_dir / "models" / "densenet_dusfe" / "summary.json").read_text())
    assert summary["epochs"] == 2 and summary["dusfe_parameter_count"] > 0
    assert not (run_dir / "models" / "densenet").exists()
    cases = (run_dir / "results" / "cases.jsonl").read_text().splitlines()
    assert sorted({json.loads(line)["method"] for line in cases}) == ["baseline_motion", "densenet_dusfe"]
    assert len(cases) == 4
    table = (run_dir / "results" / "table.md").read_text(encoding="utf-8")
    assert f"| densenet_dusfe | 2 | {summary['parameter_count']} |" in table


def test_seeds_keep_separate_runs(tmp_path, config_path):
    sweep = tmp_path / "runs" / "tiny"
    for seed in (1, 2):
        for step in ("phantom", "simulate"):
            assert run(step, "--config", config_path, "--seed", seed) == 0, step
        assert run("evaluate", "--config", config_path, "--seed", seed, "--method", "baseline_motion") == 0
    for seed in (1, 2):
        run_dir = sweep / f"seed{seed}"
        assert json.loads((run_dir / "config.json").read_text())["master_seed"] == seed
        assert len((run_dir / "results" / "cases.jsonl").read_text().splitlines()) == 2
    assert not (sweep / "results").exists()

    assert run("report", "--config", config_path) == 0
    seeds = (sweep / "report" / "seeds.md").read_text(encoding="utf-8").splitlines()
    assert seeds[0] == "| Seed | baseline_motion ΔT(mm) |"
    assert [line.split(" | ")[0] for line in seeds[2:]] == ["| 1", "| 2"]
    assert (sweep / "report" / "seeds.csv").exists()
    assert not (sweep / "report" / "table.md").exists()
