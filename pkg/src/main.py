"""Command-line entry point.

    python -m src.main capacity --scenario scenarios/circle_nu2.toml --out out
    python -m src.main demo --out out
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

from pydantic import ValidationError

from src.errors import EXIT_OK, EXIT_SUITE_FAILED, EXIT_VALIDATION, AnalysisError
from src.runner import router, run
from src.scenario import load_scenario
from src.settings import Settings
from src.utils.error_logger import get_error_logger, log_error, shutdown_error_logger
from src.utils.parallel import set_threads

logger = logging.getLogger(__name__)


def _resolution(text: str) -> List[int]:
    try:
        values = [int(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"resolution '{text}' is not N or N1,N2,...") from None
    if any(v < 1 for v in values):
        raise argparse.ArgumentTypeError("resolution entries must be positive")
    return values


def _window(text: str) -> Tuple[float, float]:
    try:
        lo, hi = (float(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"lambda window '{text}' is not LO:HI") from None
    if not 0 < lo < hi:
        raise argparse.ArgumentTypeError("lambda window needs 0 < LO < HI")
    return lo, hi


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="extl2", description="Extended L2 invariants of sampled bundle complexes")
    parser.add_argument("command", choices=router.names)
    parser.add_argument("--scenario", type=Path, help="scenario TOML file")
    parser.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    parser.add_argument("--resolution", type=_resolution, help="cells per axis: N or N1,N2,...")
    parser.add_argument("--eps-rank", type=float, help="numeric-rank threshold")
    parser.add_argument("--lambda-window", type=_window, help="capacity fit window LO:HI")
    parser.add_argument("--threads", type=int, help="worker threads for fiberwise kernels")
    parser.add_argument("--seed", type=int, help="seed for scenario checks and self-tests")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_VALIDATION

    try:
        settings = Settings.from_env()
    except (ValidationError, ValueError) as e:
        print(f"invalid environment settings: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    overrides = {"eps_rank": args.eps_rank, "threads": args.threads, "seed": args.seed}
    settings = settings.model_copy(update={k: v for k, v in overrides.items() if v is not None})
    logging.basicConfig(level=settings.log_level,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    set_threads(settings.threads)
    get_error_logger(settings.log_dir)

    scenario_label = str(args.scenario) if args.scenario else "-"
    try:
        if settings.eps_rank <= 0 or settings.threads < 1:
            log_error(scenario_label, args.command, "eps_rank must be positive and threads >= 1")
            return EXIT_VALIDATION
        scenario = load_scenario(args.scenario, settings.seed) if args.scenario else None
        summary = run(scenario, args.command, args.out, settings, args.resolution, args.lambda_window)
    except AnalysisError as e:
        logger.error("%s failed: %s", args.command, e.detail)
        log_error(scenario_label, args.command, e.detail,
                  {"exit_code": e.exit_code, "error_type": type(e).__name__})
        return e.exit_code
    finally:
        shutdown_error_logger()

    if summary.passed is False:
        logger.warning("%s: some checks failed, see %s", args.command, args.out)
        return EXIT_SUITE_FAILED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
