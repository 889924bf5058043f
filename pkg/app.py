"""
Shift Tracker Command Line

Entry point for running experiments and invariant checks:

    python app.py run-synthetic --pattern squ --T 10000 --Nt 1 --out results
    python app.py run-csv --offline offline.csv --stream stream.csv --R 1.0
    python app.py check --suite props

Every subcommand accepts ``--config FILE`` (flat key=value); flags override
the file, which overrides the built-in defaults.

Exit codes: 0 on success, 2 when an acceptance or invariant check fails,
1 on usage, configuration, data or I/O errors and on aborted seeds.
"""

import argparse
import logging
import os
import sys
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv

# Load environment variables before configuring logging
load_dotenv()

from core import ConfigError, DataFormatError, InvariantViolation, merge_config, read_config_file
from harness import ExperimentConfig, build_config, run_experiment
from reports import emit_outputs
from tools.invariants import SUITES, assert_all, run_suite

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CHECK_FAILED = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="Flat key=value config file")
    parser.add_argument("--log-level", dest="log_level", help="DEBUG, INFO, WARNING or ERROR")
    parser.add_argument("--T", dest="horizon", help="Number of online rounds")
    parser.add_argument("--Nt", dest="n_online", help="Online batch size")
    parser.add_argument("--N0", dest="n_offline", help="Offline sample size")
    parser.add_argument("--d", dest="dim", help="Feature dimension")
    parser.add_argument("--S", dest="radius", help="Parameter-norm bound")
    parser.add_argument("--R", dest="feature_bound", help="Feature-norm bound")
    parser.add_argument("--gamma-ons", dest="gamma_ons", help="ONS step parameter")
    parser.add_argument("--seeds", help="Comma-separated master seeds")
    parser.add_argument("--methods", help="Comma-separated subset of accous,olre,fix,ulsif,kliep")
    parser.add_argument("--flatten", help="identity, power:<gamma> or mixture:<alpha>")
    parser.add_argument("--divergence", help="LR, KL or LS")
    parser.add_argument("--min-len", dest="min_len", help="Shortest covering interval kept")
    parser.add_argument("--workers", help="Processes used to run seeds")
    parser.add_argument("--out", help="Output directory")


def _add_schedule(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--pattern", choices=["lin", "squ", "sin", "ber", "const"])
    parser.add_argument("--period", help="Period M of squ and sin")
    parser.add_argument("--keep-prob", dest="keep_prob", help="Probability that ber keeps alpha")
    parser.add_argument("--ber-mode", dest="ber_mode", choices=["flip", "literal"])
    parser.add_argument("--alpha0", help="Offline mixture coefficient")
    parser.add_argument("--label-radius", dest="label_radius", help="Radius r of the label rule ‖x‖ ≤ r")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="shift-tracker", description="Online density-ratio estimation under covariate shift")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    synthetic = commands.add_parser("run-synthetic", help="Run on the synthetic drifting mixture")
    _add_common(synthetic)
    _add_schedule(synthetic)

    csv = commands.add_parser("run-csv", help="Run on CSV feature files")
    _add_common(csv)
    csv.add_argument("--offline", dest="offline_csv", required=True, help="Offline CSV (x1..xd,y)")
    csv.add_argument("--stream", dest="stream_csv", required=True, help="Stream CSV (round,x1..xd,y)")

    check = commands.add_parser("check", help="Run an invariant suite")
    _add_common(check)
    _add_schedule(check)
    check.add_argument("--suite", choices=SUITES, required=True)
    return parser


def _configure_logging(level: Optional[str]) -> None:
    name = (level or os.getenv("SHIFT_TRACKER_LOG_LEVEL") or "INFO").upper()
    logging.basicConfig(level=getattr(logging, name, logging.INFO))


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """Merge defaults, the config file and the flags (in that order)."""
    flags: Dict[str, Any] = {
        key: value
        for key, value in vars(args).items()
        if key not in ("command", "config", "log_level", "suite")
    }
    file_values = read_config_file(args.config) if args.config else {}
    cfg = build_config(merge_config(file_values, flags))
    logger.info(f"Resolved config: {cfg.to_flat()}")
    return cfg


def _run(cfg: ExperimentConfig) -> int:
    result = run_experiment(cfg)
    emit_outputs(
        {r.seed: r.records for r in result.results},
        result.summaries,
        cfg.to_flat(),
        result.heatmap(cfg),
        result.buckets,
        cfg.out,
    )
    if result.any_failed:
        return EXIT_ERROR
    if any(s.prop2 is not None and not s.prop2.holds for s in result.summaries):
        logger.error("Estimation-error bound check failed")
        return EXIT_CHECK_FAILED
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    _configure_logging(args.log_level)
    try:
        cfg = resolve_config(args)
        if args.command == "check":
            assert_all(run_suite(args.suite, cfg))
            return EXIT_OK
        return _run(cfg)
    except InvariantViolation as e:
        logger.error(f"Invariant check failed: {e}")
        return EXIT_CHECK_FAILED
    except (ConfigError, DataFormatError) as e:
        logger.error(str(e))
        return EXIT_ERROR
    except OSError as e:
        logger.error(f"I/O error: {e}")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
