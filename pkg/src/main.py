"""
Command-line entry point for the air-data MHE/FDI harness.

Runs simulated flight scenarios through sensor fault detection, fusion and
the moving horizon estimator, and writes traces, events and metrics.

Usage:
    python -m src run presets/1-F.ini [--out DIR] [--seed N] [--quiet] [--no-timing]
    python -m src suite presets [--jobs N] [--out DIR] [--no-timing]
    python -m src version
"""

import argparse
import asyncio
import logging
import sys
from typing import Optional

from . import __version__
from .config import get_settings
from .exceptions import AirDataError, ConfigError
from .services.metrics import compare_to_reference
from .services.pipeline import reference_metrics, run_scenario, run_suite
from .services.scenario_loader import load_scenario

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_SCENARIO_FAILURE = 1
EXIT_CONFIG_ERROR = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mhe-fdi",
        description="Constrained moving horizon estimation of AOA and wind with sensor fault isolation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run one scenario preset")
    run.add_argument("config", help="Scenario preset (.ini)")
    run.add_argument("--out", default=None, help="Output directory (default: MHE_FDI_OUTPUT_DIR)")
    run.add_argument("--seed", type=int, default=None, help="Override the preset's seed")
    run.add_argument("--quiet", action="store_true", help="Only log warnings and errors")
    run.add_argument("--no-timing", action="store_true", help="Write solver_ms as 0 for reproducible traces")

    suite = sub.add_parser("suite", help="Run every preset of a directory")
    suite.add_argument("directory", nargs="?", default=None, help="Preset directory (default: MHE_FDI_PRESETS_DIR)")
    suite.add_argument("--jobs", type=int, default=None, help="Scenarios run concurrently")
    suite.add_argument("--out", default=None, help="Output directory (default: MHE_FDI_OUTPUT_DIR)")
    suite.add_argument("--quiet", action="store_true", help="Only log warnings and errors")
    suite.add_argument("--no-timing", action="store_true", help="Write solver_ms as 0 for reproducible traces")

    sub.add_parser("version", help="Print the package version")
    return parser


def _configure_logging(quiet: bool) -> None:
    level = logging.WARNING if quiet else getattr(logging, get_settings().log_level.upper(), logging.INFO)
    logging.basicConfig(level=level, format="%(asctime)s | %(levelname)-8s | %(message)s", force=True)


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = load_scenario(args.config, seed=args.seed)
    try:
        result = run_scenario(cfg, out_dir=args.out, record_timing=not args.no_timing)
        failures = result.failures
        if cfg.acceptance.reference is not None:
            failures = failures + compare_to_reference(
                cfg.acceptance, result.metrics, reference_metrics(args.config, cfg)
            )
    except AirDataError as e:
        logger.error(f"[Run] {cfg.name}: {e}")
        return EXIT_SCENARIO_FAILURE

    m = result.metrics
    print(
        f"{cfg.name}: AOA AEE mean/max {m.aee_alpha_mean:.3f}/{m.aee_alpha_max:.3f} deg, "
        f"VCAS AEE mean/max {m.aee_vcas_mean:.3f}/{m.aee_vcas_max:.3f} kts, "
        f"false alarms {m.false_alarms}, missed {m.missed_detections}, "
        f"solver mean/p99/max {m.solver_ms_mean:.2f}/{m.solver_ms_p99:.2f}/{m.solver_ms_max:.2f} ms"
    )
    for ch, delay in m.detection_delay.items():
        print(f"  {ch}: " + ("not detected" if delay is None else f"detected after {delay:.3f} s"))
    if failures:
        for msg in failures:
            print(f"  FAIL {msg}")
        return EXIT_SCENARIO_FAILURE
    return EXIT_OK


def _cmd_suite(args: argparse.Namespace) -> int:
    settings = get_settings()
    directory = args.directory if args.directory is not None else settings.presets_dir
    jobs = args.jobs if args.jobs is not None else settings.suite_jobs
    if jobs < 1:
        raise ConfigError(f"--jobs must be at least 1, got {jobs}")

    rows = asyncio.run(run_suite(directory, jobs=jobs, out_dir=args.out, record_timing=not args.no_timing))
    bad = [row for row in rows if row.status != "pass"]
    for row in bad:
        detail = row.error if row.status == "error" else "; ".join(row.failures)
        print(f"{row.scenario}: {row.status.upper()} {detail}")
    timed = [row.metrics for row in rows if row.metrics is not None and row.metrics.solver_ms_max > 0.0]
    if timed:
        print(
            f"solver time: worst mean {max(m.solver_ms_mean for m in timed):.2f} ms, "
            f"worst p99 {max(m.solver_ms_p99 for m in timed):.2f} ms, "
            f"max {max(m.solver_ms_max for m in timed):.2f} ms"
        )
    print(f"{len(rows) - len(bad)}/{len(rows)} scenarios passed")
    return EXIT_SCENARIO_FAILURE if bad else EXIT_OK


def main(argv: Optional[list[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "version":
        print(__version__)
        return EXIT_OK

    _configure_logging(args.quiet)
    try:
        if args.command == "run":
            return _cmd_run(args)
        return _cmd_suite(args)
    except ConfigError as e:
        logger.error(str(e))
        return EXIT_CONFIG_ERROR


if __name__ == "__main__":
    sys.exit(main())
