"""
Comparison tables across methods, stored published reference rows, and the
multi-seed adapted-vs-source-only summary.
"""

from __future__ import annotations

import glob
import os

import numpy as np

from errors import ConfigInvalid
from output import read_json

REFERENCE_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "static", "reference_rows")
TABLE_HEADER = "| Method | SSIM ↑ | MAE (mm) ↓ | RMSE (mm) ↓ | δ1 < 1.25 ↑ |"
TABLE_RULE = "|---|---|---|---|---|"
COLUMNS = ("ssim", "mae_mm", "rmse_mm", "delta1")


def format_cell(stat: dict | None) -> str:
    """`mean ± std` with 3 decimals; the std is omitted when absent."""
    if not stat or stat.get("mean") is None:
        return "–"
    cell = f"{stat['mean']:.3f}"
    if stat.get("std") is not None:
        cell += f" ± {stat['std']:.3f}"
    return cell


def table_row(payload: dict) -> str:
    try:
        label = payload["method_label"]
        aggregate = payload["aggregate"]
    except KeyError as exc:
        raise ConfigInvalid(f"report row is missing {exc}") from exc
    cells = [format_cell(aggregate.get(key)) for key in COLUMNS]
    return "| " + " | ".join([label, *cells]) + " |"


def format_table(payloads: list[dict], operand_note: bool = True) -> str:
    """Markdown comparison table; one row per report or reference row."""
    lines = [TABLE_HEADER, TABLE_RULE]
    lines += [table_row(p) for p in payloads]
    operands = {p.get("eval_config", {}).get("ssim_operand") for p in payloads} - {None}
    if operand_note and operands:
        lines += ["", f"SSIM computed on {', '.join(sorted(operands))}."]
    return "\n".join(lines) + "\n"


def reference_paths(directory: str = REFERENCE_DIR) -> list[str]:
    return sorted(glob.glob(os.path.join(directory, "*.json")))


def merge_reports(paths: list[str]) -> str:
    """Table over report.json files and/or reference row files, in argument order."""
    if not paths:
        raise ConfigInvalid("report needs at least one input")
    return format_table([read_json(p) for p in paths])


def compare_seed_runs(runs: list[dict]) -> dict:
    """Summarize adapted vs source-only target RMSE over seeds.

    Each run is {"seed", "adapted": report dict, "source_only": report dict}.
    """
    if not runs:
        raise ConfigInvalid("no seed runs to compare")
    per_seed = []
    for run in runs:
        adapted = run["adapted"]["aggregate"]["rmse_mm"]["mean"]
        baseline = run["source_only"]["aggregate"]["rmse_mm"]["mean"]
        per_seed.append({
            "seed": run["seed"],
            "adapted_rmse_mm": adapted,
            "source_only_rmse_mm": baseline,
            "improved": adapted < baseline,
        })
    adapted_mean = float(np.mean([r["adapted_rmse_mm"] for r in per_seed]))
    baseline_mean = float(np.mean([r["source_only_rmse_mm"] for r in per_seed]))
    improved = sum(r["improved"] for r in per_seed)
    return {
        "per_seed": per_seed,
        "n_seeds": len(per_seed),
        "improved_count": improved,
        "adapted_mean_rmse_mm": adapted_mean,
        "source_only_mean_rmse_mm": baseline_mean,
        "direction_holds": adapted_mean < baseline_mean and 2 * improved > len(per_seed),
    }


def format_seed_summary(summary: dict) -> str:
    lines = [
        "| Seed | Source-only RMSE (mm) | Adapted RMSE (mm) | Improved |",
        "|---|---|---|---|",
    ]
    for r in summary["per_seed"]:
        lines.append(f"| {r['seed']} | {r['source_only_rmse_mm']:.3f} | {r['adapted_rmse_mm']:.3f} | "
                     f"{'yes' if r['improved'] else 'no'} |")
    lines += [
        "",
        f"Mean target RMSE: source-only {summary['source_only_mean_rmse_mm']:.3f} mm, "
        f"adapted {summary['adapted_mean_rmse_mm']:.3f} mm; "
        f"adapted better in {summary['improved_count']}/{summary['n_seeds']} seeds.",
    ]
    return "\n".join(lines) + "\n"
