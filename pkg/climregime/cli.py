import argparse
import logging
import sys
from typing import List, Optional

from .config import load_pipeline_config
from .core import cmd_analyze, cmd_discretize, cmd_report, cmd_synth, cmd_train, set_verbosity
from .exceptions import ClimRegimeError
from .util.logging_utils import Colors, get_logger

logger = get_logger(level=logging.DEBUG)

COMMANDS = ("synth", "train", "discretize", "analyze", "report")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Discover daily climate regimes and their ENSO teleconnections."
    )

    subparsers = parser.add_subparsers(dest="mode", help="Pipeline stage")
    subparsers.required = True

    # Common arguments function
    def add_common_args(subparser: argparse.ArgumentParser) -> None:
        subparser.add_argument("--config", required=True, help="Path to the pipeline config JSON")
        subparser.add_argument(
            "--seed", type=int, default=None, help="Master seed overriding the config"
        )
        subparser.add_argument(
            "--epochs", type=int, default=None, help="Training epochs overriding the config"
        )
        subparser.add_argument(
            "--out", default=None, help="Output directory overriding the config"
        )
        subparser.add_argument(
            "-v",
            "--verbosity",
            type=int,
            choices=[0, 1, 2],
            default=0,
            help="Verbosity level: 0 (quiet), 1 (normal), 2 (verbose)",
        )

    synth_parser = subparsers.add_parser(
        "synth", help="Write a synthetic dataset with planted regimes"
    )
    add_common_args(synth_parser)

    train_parser = subparsers.add_parser("train", help="Train the encoder and prototypes")
    add_common_args(train_parser)

    discretize_parser = subparsers.add_parser(
        "discretize", help="Assign every day to a regime"
    )
    add_common_args(discretize_parser)
    discretize_parser.add_argument(
        "--checkpoint", default=None, help="Checkpoint path (default: <out>/checkpoint.bin)"
    )

    analyze_parser = subparsers.add_parser(
        "analyze", help="Compute regime and teleconnection statistics"
    )
    add_common_args(analyze_parser)
    analyze_parser.add_argument(
        "--regimes", default=None, help="Regime CSV (default: <out>/regimes.csv)"
    )
    analyze_parser.add_argument("--oni", default=None, help="ONI CSV overriding the config")
    analyze_parser.add_argument(
        "--oracle",
        action="store_true",
        help="Recount every ΔP slice day by day and require exact agreement",
    )

    report_parser = subparsers.add_parser(
        "report", help="Summarize an analysis directory"
    )
    add_common_args(report_parser)
    report_parser.add_argument(
        "--analysis-dir", default=None, help="Directory holding the analysis CSVs (default: <out>)"
    )

    return parser


def run(argv: Optional[List[str]] = None) -> int:
    """Parse ``argv``, dispatch to a pipeline stage and return the exit code."""
    args = build_parser().parse_args(argv)
    set_verbosity(args.verbosity)

    try:
        cfg = load_pipeline_config(args.config)
        cfg.apply_overrides(seed=args.seed, epochs=args.epochs, output_dir=args.out)
        logger.debug(f"Resolved config: {cfg.to_dict()}")

        if args.mode == "synth":
            cmd_synth(cfg)
        elif args.mode == "train":
            cmd_train(cfg, show_progress=args.verbosity > 0)
        elif args.mode == "discretize":
            cmd_discretize(cfg, checkpoint_path=args.checkpoint)
        elif args.mode == "analyze":
            cmd_analyze(cfg, regimes_path=args.regimes, oni_path=args.oni, oracle=args.oracle)
        elif args.mode == "report":
            cmd_report(cfg, analysis_dir=args.analysis_dir)
    except ClimRegimeError as e:
        logger.error(f"{Colors.RED}{type(e).__name__}: {e}{Colors.RESET}")
        return e.exit_code
    return 0


def main() -> None:
    sys.exit(run())
