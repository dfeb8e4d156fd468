#!/usr/bin/env python3
"""
Multi-seed domain-gap experiment.

One dataset (source + target) is rendered once. For every training seed the
source model is pretrained, then fine-tuned twice for the same number of
steps: once source-only and once with adversarial adaptation. Both are
evaluated on the target test split and compared on median-scaled RMSE.
"""

from __future__ import annotations

import os
from dataclasses import replace

from dataset import build_dataset
from errors import LumenDAError
from log_utils import RunLogger
from lumen_da import CliParser
from metrics import evaluate
from output import write_json, write_text
from report import compare_seed_runs, format_seed_summary, format_table
from run_config import resolve_config
from trainer import adapt_domain, finetune_source_only, train_source

DEFAULT_SEEDS = (0, 1, 2, 3, 4)
SOURCE_VAL_DELTA1_FLOOR = 0.9


def run_seed(cfg, manifest, seed: int, work_dir: str, logger: RunLogger) -> dict:
    train_cfg = replace(cfg.train, seed=seed)
    seed_dir = os.path.join(work_dir, f"seed_{seed}")
    pretrained = train_source(manifest, train_cfg, cfg.model, run_dir=os.path.join(seed_dir, "pretrain"),
                              logger=logger, echo={**cfg.to_dict(), "seed": seed})
    best = [h for h in pretrained.metric_history if h["epoch"] == pretrained.best_epoch]
    source_val_delta1 = best[0]["val_delta1"] if best else None

    baseline = finetune_source_only(pretrained, manifest, train_cfg, run_dir=os.path.join(seed_dir, "source_only"),
                                    logger=logger, tgt_manifest=manifest)
    adapted = adapt_domain(pretrained, manifest, manifest, train_cfg, run_dir=os.path.join(seed_dir, "adapted"),
                           logger=logger)

    reports = {}
    for name, ckpt, label in (("source_only", baseline, "Ours w/o DA"), ("adapted", adapted, "Ours")):
        report = evaluate(ckpt, manifest, split="test", label=f"{label} (seed {seed})", domain="target",
                          eval_cfg=cfg.eval, out_dir=os.path.join(seed_dir, f"eval_{name}"), logger=logger)
        reports[name] = report.to_dict()
    return {"seed": seed, "source_val_delta1": source_val_delta1, **reports}


def run_experiment(cfg, work_dir: str, seeds=DEFAULT_SEEDS, logger: RunLogger | None = None) -> dict:
    logger = logger or RunLogger()
    manifest = build_dataset(cfg.data, os.path.join(work_dir, "data"), logger=logger)
    runs = []
    for seed in seeds:
        logger.info(f"── seed {seed} ──")
        runs.append(run_seed(cfg, manifest, seed, work_dir, logger))

    summary = compare_seed_runs(runs)
    deltas = [r["source_val_delta1"] for r in runs if r["source_val_delta1"] is not None]
    summary["source_val_delta1_min"] = min(deltas) if deltas else None
    summary["source_val_delta1_ok"] = bool(deltas) and min(deltas) > SOURCE_VAL_DELTA1_FLOOR

    write_json(os.path.join(work_dir, "summary.json"), {"summary": summary, "config": cfg.to_dict()})
    table = format_table([r[name] for r in runs for name in ("source_only", "adapted")])
    write_text(os.path.join(work_dir, "summary.md"), format_seed_summary(summary) + "\n" + table)
    return summary


def main(argv: list[str] | None = None) -> int:
    parser = CliParser(description="Adapted vs source-only target RMSE over several seeds.")
    parser.add_argument("--work", required=True, help="Working directory for data, runs and summary.")
    parser.add_argument("--seeds", type=int, nargs="+", default=list(DEFAULT_SEEDS), help="Training seeds.")
    parser.add_argument("--config", help="JSON run configuration file.")
    parser.add_argument("--profile", choices=["full", "desk"], default="desk", help="Built-in defaults.")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="Override a config key by dotted path. Repeatable.")
    parser.add_argument("--require-direction", action="store_true",
                        help="Exit 1 unless adaptation beats source-only in the mean and in most seeds "
                             "and every seed clears the source-val delta1 floor.")
    args = parser.parse_args(argv)

    logger = RunLogger(name="experiment")
    try:
        cfg = resolve_config(args.config, args.profile, args.overrides)
        summary = run_experiment(cfg, args.work, args.seeds, logger)
    except LumenDAError as exc:
        print(f"[ERROR] {exc.category}: {exc}")
        return exc.exit_code

    print(format_seed_summary(summary))
    logger.summary()
    if not args.require_direction:
        return 0
    failed = False
    if not summary["direction_holds"]:
        print("[ERROR] adapted model did not beat the source-only baseline")
        failed = True
    if not summary["source_val_delta1_ok"]:
        print(f"[ERROR] source-val delta1 {summary['source_val_delta1_min']} is not above {SOURCE_VAL_DELTA1_FLOOR}")
        failed = True
    return 1 if failed else 0


if __name__ == "__main__":
    raise SystemExit(main())
