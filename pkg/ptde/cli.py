# Command-line interface
# ptde {train1,distill,eval,report,pipeline} --config PATH [--seed N] [--variant V] [--out DIR]

import argparse
import os
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from dotenv import load_dotenv

from .config import ExperimentConfig, load_config
from .exceptions import PTDEError
from .harness import Experiment, run_pipeline
from .logging import configure_logging, get_logger
from .report import format_report, report

logger = get_logger("cli")


def _output_dir(args: argparse.Namespace, config: Optional[ExperimentConfig] = None) -> Path:
    if args.out:
        return Path(args.out)
    if os.environ.get("PTDE_OUTPUT_DIR"):
        return Path(os.environ["PTDE_OUTPUT_DIR"])
    return Path(config.output_dir if config is not None else "runs")


def _seeds(args: argparse.Namespace, config: ExperimentConfig) -> List[int]:
    return [args.seed] if args.seed is not None else list(config.seeds)


def _configs(args: argparse.Namespace, config: ExperimentConfig) -> List[ExperimentConfig]:
    if args.variant is not None:
        return [config.with_updates(variant=args.variant, variants=None)]
    return config.expand_variants()


def _run_stage(args: argparse.Namespace, stage: str) -> int:
    config = load_config(args.config)
    out = _output_dir(args, config)
    runs = _configs(args, config)
    for run in runs:
        if stage == "distill" and len(runs) > 1 and not run.variant.distillable:
            logger.info("Skipping variant without a distillation stage", {"variant": run.variant.value})
            continue
        for seed in _seeds(args, config):
            Experiment(run, seed, out).run(stage)
    return 0


def cmd_train1(args: argparse.Namespace) -> int:
    return _run_stage(args, "train1")


def cmd_distill(args: argparse.Namespace) -> int:
    return _run_stage(args, "distill")


def cmd_eval(args: argparse.Namespace) -> int:
    return _run_stage(args, "eval")


def cmd_report(args: argparse.Namespace) -> int:
    dirs = args.dirs or [_output_dir(args)]
    summary = report(dirs, out_dir=args.report_out or dirs[0])
    sys.stdout.write(format_report(summary))
    return 0


def cmd_pipeline(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    out = _output_dir(args, config)
    if args.seed is not None:
        for run in _configs(args, config):
            Experiment(run, args.seed, out).pipeline()
        return 0
    if args.variant is not None:
        config = config.with_updates(variant=args.variant, variants=None)
    summary = run_pipeline(config, out, jobs=args.jobs, config_path=None if args.variant else args.config)
    sys.stdout.write(format_report(summary))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ptde", description="Two-stage multi-agent training with distilled execution")
    sub = parser.add_subparsers(dest="command", required=True)

    def stage_parser(name: str, help_text: str, func) -> argparse.ArgumentParser:
        stage = sub.add_parser(name, help=help_text)
        stage.add_argument("--config", required=True, help="Experiment config JSON")
        stage.add_argument("--seed", type=int, default=None, help="Run one seed instead of the config's seeds")
        stage.add_argument("--variant", default=None, help="Run one variant instead of the config's variants")
        stage.add_argument("--out", default=None, help="Output root (default: $PTDE_OUTPUT_DIR, then output_dir)")
        stage.set_defaults(func=func)
        return stage

    stage_parser("train1", "Stage 1: train the variant with its message source", cmd_train1)
    stage_parser("distill", "Stage 2: generate the teacher dataset and fit the student", cmd_distill)
    stage_parser("eval", "Evaluate the centralized and distilled executors", cmd_eval)
    pipeline = stage_parser("pipeline", "train1, distill and eval for every seed, then report", cmd_pipeline)
    pipeline.add_argument("--jobs", type=int, default=1, help="Seeds run concurrently as separate processes")

    rep = sub.add_parser("report", help="Aggregate eval.csv files into report.csv and report.txt")
    rep.add_argument("dirs", nargs="*", type=Path, help="Result directories (default: the output root)")
    rep.add_argument("--out", default=None, help="Output root searched when no directories are given")
    rep.add_argument("--report-out", dest="report_out", default=None, help="Where report.csv/report.txt go")
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv()
    configure_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PTDEError as e:
        logger.error(str(e), {"command": args.command, "error_type": type(e).__name__})
        return 2


if __name__ == "__main__":
    sys.exit(main())
