import csv
from pathlib import Path

import nbformat as nbf
from loguru import logger

from sfereg.evaluation.metrics import METRIC_NAMES, CaseResult, MethodSummary
from sfereg.registration.base import Method
from sfereg.registration.registry import METHOD_ORDER

COLUMNS = {
    "dT_mm": ("ΔT(mm)", 1.0),
    "dR_deg": ("ΔR(deg)", 1.0),
    "nmse_mu": ("NMSE(%)", 100.0),
    "nmae_mu": ("NMAE(%)", 100.0),
}


def ordered(summaries: dict[str, MethodSummary]) -> list[MethodSummary]:
    """Known methods in table order, anything else after them alphabetically."""
    known = [m.value for m in METHOD_ORDER if m.value in summaries]
    rest = sorted(set(summaries) - set(known))
    return [summaries[name] for name in known + rest]


def _cell(summary: MethodSummary, metric: str) -> str:
    _, scale = COLUMNS[metric]
    s = summary.metrics[metric]
    text = f"{s.mean * scale:.2f} ± {s.std * scale:.2f}"
    return f"{text}*" if summary.single_case else text


def markdown_table(summaries: dict[str, MethodSummary]) -> str:
    header = ["Method", "n", "#Parameter", *(COLUMNS[m][0] for m in METRIC_NAMES)]
    lines = [
        "| " + " | ".join(header) + " |",
        "|" + "|".join("---" for _ in header) + "|",
    ]
    rows = ordered(summaries)
    for s in rows:
        params = "-" if s.parameter_count is None else str(s.parameter_count)
        cells = [s.method, str(s.n), params, *(_cell(s, m) for m in METRIC_NAMES)]
        lines.append("| " + " | ".join(cells) + " |")
    if any(s.single_case for s in rows):
        lines.append("")
        lines.append("\\* single case, std reported as 0")
    return "\n".join(lines) + "\n"


def write_csv(path: str | Path, summaries: dict[str, MethodSummary]) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(
            [
                "method",
                "n",
                "single_case",
                "parameter_count",
                *(f"{m}_{stat}" for m in METRIC_NAMES for stat in ("mean", "std")),
            ]
        )
        for s in ordered(summaries):
            values = []
            for m in METRIC_NAMES:
                values += [s.metrics[m].mean, s.metrics[m].std]
            params = "" if s.parameter_count is None else s.parameter_count
            writer.writerow([s.method, s.n, s.single_case, params, *values])
    return path


def _sweep_methods(per_seed: dict[int, dict[str, MethodSummary]]) -> list[str]:
    merged: dict[str, MethodSummary] = {}
    for summaries in per_seed.values():
        merged.update(summaries)
    return [s.method for s in ordered(merged)]


def _dusfe_wins(summaries: dict[str, MethodSummary]) -> bool | None:
    """Whether the DuSFE arm beats plain DenseNet on mean ΔT; None unless both arms ran."""
    plain = summaries.get(Method.DENSENET.value)
    fused = summaries.get(Method.DENSENET_DUSFE.value)
    if plain is None or fused is None:
        return None
    return fused.metrics["dT_mm"].mean < plain.metrics["dT_mm"].mean


def seed_table(per_seed: dict[int, dict[str, MethodSummary]]) -> str:
    """Mean ΔT of every method for each seed, so a seed that inverts the ranking stays visible."""
    methods = _sweep_methods(per_seed)
    show_arms = any(_dusfe_wins(s) is not None for s in per_seed.values())
    header = ["Seed", *(f"{m} ΔT(mm)" for m in methods)]
    if show_arms:
        header.append("DuSFE better")
    lines = [
        "| " + " | ".join(header) + " |",
        "|" + "|".join("---" for _ in header) + "|",
    ]
    for seed in sorted(per_seed):
        summaries = per_seed[seed]
        cells = [str(seed)]
        for m in methods:
            cells.append(f"{summaries[m].metrics['dT_mm'].mean:.2f}" if m in summaries else "-")
        if show_arms:
            wins = _dusfe_wins(summaries)
            cells.append("-" if wins is None else ("yes" if wins else "no"))
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def write_seed_csv(path: str | Path, per_seed: dict[int, dict[str, MethodSummary]]) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["seed", "method", "n", "dT_mm_mean", "dT_mm_std"])
        for seed in sorted(per_seed):
            for s in ordered(per_seed[seed]):
                dT = s.metrics["dT_mm"]
                writer.writerow([seed, s.method, s.n, dT.mean, dT.std])
    return path


def write_notebook(
    path: str | Path,
    run_name: str,
    summaries: dict[str, MethodSummary],
    results: list[CaseResult],
) -> Path:
    """Static notebook: the comparison table, then one per-case listing per method."""
    path = Path(path)
    nb = nbf.v4.new_notebook()
    nb["cells"] = [
        nbf.v4.new_markdown_cell(f"# Registration results: {run_name}"),
        nbf.v4.new_markdown_cell(markdown_table(summaries)),
    ]
    for s in ordered(summaries):
        cases = sorted((r for r in results if r.method == s.method), key=lambda r: r.case_id)
        rows = ["| case | ΔT(mm) | ΔR(deg) | NMSE(%) | NMAE(%) |", "|---|---|---|---|---|"]
        for r in cases:
            rows.append(
                f"| {r.case_id} | {r.dT_mm:.2f} | {r.dR_deg:.2f} | {100 * r.nmse_mu:.2f} | {100 * r.nmae_mu:.2f} |"
            )
        nb["cells"].append(nbf.v4.new_markdown_cell(f"## {s.method}\n\n" + "\n".join(rows)))
    try:
        with open(path, "w", encoding="utf-8") as f:
            nbf.write(nb, f)
    except OSError as e:
        logger.error(f"Error writing report notebook: {e}")
        raise
    return path
