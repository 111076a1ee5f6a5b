"""Command-line entry point: ``addle <subcommand> [--config PATH] [--seed N] [--out DIR] [--mode M]``.

Exit codes: 0 success, 1 configuration error, 2 runtime failure (a
``FAILED.txt`` marker naming the stage is left in the output directory).
"""
from __future__ import annotations

import argparse
import logging
import sys
import traceback
from pathlib import Path

from addle import pipeline
from addle.backbone import MODES
from addle.config import ConfigError, ExperimentConfig, dump_config, load_config

COMMANDS = {
    "gen-data": "simulate raters and write the dataset + splits",
    "train": "train the selected model families on the training split",
    "finetune-raters": "re-fit each rater's code (or head) with shared weights frozen",
    "greedy-select": "choose virtual raters on the gold validation split",
    "eval": "score the test split and write reports and ROC tables",
    "analyze-latent": "interpolation, PCA and norm analysis of the rater codes",
    "run": "all of the above in order",
    "default-config": "print the default configuration",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="addle",
        description="Rater-specific latent embeddings for subjective ordinal labels.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="default configuration:\n\n" + dump_config(ExperimentConfig()),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        if name == "default-config":
            continue
        p.add_argument("--config", type=Path, help="INI experiment config (defaults apply to missing keys)")
        p.add_argument("--seed", type=int, help="master seed; overrides [experiment] seed")
        p.add_argument("--out", type=Path, default=Path("runs/default"), help="artifact directory (default: runs/default)")
        if name not in ("gen-data", "analyze-latent"):
            p.add_argument("--mode", choices=MODES, action="append", help="restrict to one model family (repeatable)")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "default-config":
        sys.stdout.write(dump_config(ExperimentConfig()))
        return 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load(args)
        modes = tuple(getattr(args, "mode", None) or ()) or None
        if modes:
            bad = [m for m in modes if m not in cfg.modes]
            if bad:
                raise ConfigError(f"--mode {', '.join(bad)}: not enabled in [experiment] modes")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    out: Path = args.out
    stage = args.command
    stale = out / "FAILED.txt"
    if stale.exists():
        stale.unlink()
    try:
        if stage == "run":
            summary = pipeline.run_pipeline(cfg, out, modes)
            for name, rep in summary["reports"].items():
                print(f"{name:20s} JT {rep['jt']:.4f}")
        else:
            pipeline.run_stage(stage, cfg, out, modes)
    except Exception as exc:  # noqa: BLE001 - every failure maps to exit code 2
        out.mkdir(parents=True, exist_ok=True)
        (out / "FAILED.txt").write_text(f"stage: {stage}\nerror: {exc}\n\n{traceback.format_exc()}", encoding="utf-8")
        print(f"{stage} failed: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
