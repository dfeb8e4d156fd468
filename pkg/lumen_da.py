#!/usr/bin/env python3
"""
LumenDA command-line entry point.

    gen      render a dataset and its manifest
    train    source pretraining (phase 1)
    adapt    domain-adversarial fine-tuning (phase 2), or its source-only baseline
    eval     metrics report and error heatmaps for a checkpoint
    predict  depth PNG for one image
    report   merged comparison table across reports
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from checkpoint import load_checkpoint
from config import DEPTH_SCALE_MM_PER_UNIT
from dataset import build_dataset, image_to_tensor, load_manifest
from errors import LumenDAError, UsageError, exit_code_table
from log_utils import RunLogger
from metrics import evaluate
from output import read_rgb_png, write_depth_png, write_text
from report import merge_reports, reference_paths
from run_config import resolve_config
from trainer import adapt_domain, finetune_source_only, train_source


class CliParser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors exit with the UsageError code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(UsageError.exit_code, f"[ERROR] {UsageError.category}: {message}\n")


def _exit_code_epilog() -> str:
    lines = ["exit codes:"]
    lines += [f"  {code:>2}  {name}" for code, name in exit_code_table()]
    return "\n".join(lines)


def _add_config_args(parser: argparse.ArgumentParser, required: bool = False) -> None:
    parser.add_argument("--config", required=required, help="JSON run configuration file.")
    parser.add_argument("--profile", choices=["full", "desk"], help="Built-in defaults (default: the config's, else full).")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="Override a config key by dotted path, e.g. train.batch_size=8. Repeatable.")


def build_parser() -> argparse.ArgumentParser:
    parser = CliParser(
        prog="lumen_da.py",
        description="Synthetic-to-target domain-adaptive depth estimation pipeline.",
        epilog=_exit_code_epilog(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--quiet", action="store_true", help="Suppress progress output.")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, help_text):
        return sub.add_parser(name, help=help_text, description=help_text, epilog=_exit_code_epilog(),
                              formatter_class=argparse.RawDescriptionHelpFormatter)

    p = command("gen", "Render source/target frames and write the manifest.")
    _add_config_args(p)
    p.add_argument("--out", required=True, help="Dataset directory.")

    p = command("train", "Supervised source pretraining with early stopping.")
    _add_config_args(p)
    p.add_argument("--data", required=True, help="Manifest (or dataset directory) with source train/val.")
    p.add_argument("--run", required=True, help="Run directory.")

    p = command("adapt", "Domain-adversarial fine-tuning of a pretrained checkpoint.")
    _add_config_args(p)
    p.add_argument("--ckpt", required=True, help="Source-pretrain checkpoint directory.")
    p.add_argument("--source", required=True, help="Labeled source manifest.")
    p.add_argument("--target", required=True, help="Target manifest (train split needs no depth).")
    p.add_argument("--run", required=True, help="Run directory.")
    p.add_argument("--source-only", action="store_true",
                   help="Run the baseline: same schedule without the adversarial term.")

    p = command("eval", "Evaluate a checkpoint with median scaling.")
    _add_config_args(p)
    p.add_argument("--ckpt", required=True, help="Checkpoint directory.")
    p.add_argument("--data", required=True, help="Manifest (or dataset directory).")
    p.add_argument("--split", default="test", choices=["train", "val", "test"], help="Split to evaluate.")
    p.add_argument("--domain", default="target", choices=["source", "target"], help="Domain to evaluate.")
    p.add_argument("--label", help="Method label for the report (default: checkpoint phase).")
    p.add_argument("--out", required=True, help="Output directory for report.json, report.md, heatmaps/.")

    p = command("predict", "Predict a depth map for one image.")
    p.add_argument("--ckpt", required=True, help="Checkpoint directory.")
    p.add_argument("--image", required=True, help="Input RGB image.")
    p.add_argument("--out", required=True, help="Output 16-bit depth PNG.")

    p = command("report", "Merge reports into one comparison table.")
    p.add_argument("--inputs", nargs="+", default=[], help="report.json or reference row files.")
    p.add_argument("--with-reference", action="store_true", help="Prepend the stored published rows.")
    p.add_argument("--out", required=True, help="Output markdown file.")
    return parser


def flag_inventory(parser: argparse.ArgumentParser | None = None) -> list[str]:
    """Sorted 'command --flag' lines for every option of every subcommand."""
    parser = parser or build_parser()
    lines = [f"* {opt}" for action in parser._actions for opt in action.option_strings]
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            for name, sub in action.choices.items():
                lines += [f"{name} {opt}" for a in sub._actions for opt in a.option_strings]
    return sorted(lines)


def _resolve(args):
    return resolve_config(args.config, args.profile, args.overrides)


def cmd_gen(args, logger) -> int:
    cfg = _resolve(args)
    manifest = build_dataset(cfg.data, args.out, logger=logger)
    logger.info(f"Manifest hash {manifest.content_hash()}")
    return 0


def cmd_train(args, logger) -> int:
    cfg = _resolve(args)
    manifest = load_manifest(args.data)
    echo = {**cfg.to_dict(), "manifest_hash": manifest.content_hash()}
    ckpt = train_source(manifest, cfg.train, cfg.model, run_dir=args.run, logger=logger, echo=echo)
    logger.info(f"Best epoch {ckpt.best_epoch}; checkpoint in {args.run}")
    return 0


def cmd_adapt(args, logger) -> int:
    cfg = _resolve(args)
    ckpt = load_checkpoint(args.ckpt)
    src = load_manifest(args.source)
    tgt = load_manifest(args.target)
    echo = {
        **cfg.to_dict(),
        "init_checkpoint": args.ckpt,
        "source_manifest_hash": src.content_hash(),
        "target_manifest_hash": tgt.content_hash(),
        "variant": "source_only" if args.source_only else "adapted",
    }
    if args.source_only:
        finetune_source_only(ckpt, src, cfg.train, run_dir=args.run, logger=logger, echo=echo, tgt_manifest=tgt)
    else:
        adapt_domain(ckpt, src, tgt, cfg.train, run_dir=args.run, logger=logger, echo=echo)
    return 0


def cmd_eval(args, logger) -> int:
    cfg = _resolve(args)
    ckpt = load_checkpoint(args.ckpt, with_optimizer=False)
    manifest = load_manifest(args.data, strict=False)
    evaluate(ckpt, manifest, split=args.split, label=args.label, domain=args.domain,
             eval_cfg=cfg.eval, out_dir=args.out, logger=logger)
    return 0


def cmd_predict(args, logger) -> int:
    ckpt = load_checkpoint(args.ckpt, with_optimizer=False)
    model = ckpt.build_model()
    model.eval()
    rgb = read_rgb_png(args.image, size=ckpt.model_config.image_size)
    depth = model.predict_mm(image_to_tensor(rgb).unsqueeze(0))[0, 0].double().numpy()
    write_depth_png(args.out, depth, DEPTH_SCALE_MM_PER_UNIT)
    logger.ok("predict", f"{args.out} (median {float(np.median(depth)):.2f} mm)")
    return 0


def cmd_report(args, logger) -> int:
    inputs = list(args.inputs)
    if args.with_reference:
        inputs = reference_paths() + inputs
    table = merge_reports(inputs)
    write_text(args.out, table)
    logger.ok("report", f"{len(inputs)} rows -> {args.out}")
    return 0


COMMANDS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "adapt": cmd_adapt,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logger = RunLogger(quiet=args.quiet)
    try:
        code = COMMANDS[args.command](args, logger)
        logger.summary()
        return code
    except LumenDAError as exc:
        print(f"[ERROR] {exc.category}: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:
        print(f"[ERROR] unexpected: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
