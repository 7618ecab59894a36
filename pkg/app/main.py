"""
Command-line entry point.

    python -m app.main run configs/full.toml --seed 7 --out out/full --only jacobi
"""
import argparse
import logging
import sys
from typing import List, Optional

from app.core.config import settings
from app.services.run_service import run_service

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lagrangian-lab", description=settings.app_name)
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="Solve every configured instance and run the enabled checks")
    run.add_argument("config", help="Path to the TOML run configuration")
    run.add_argument("--seed", type=int, default=None, help="Override the config seed")
    run.add_argument("--out", default=None, help="Override the output directory")
    run.add_argument("--only", default=None, metavar="CHECK", help="Run a single check family")
    run.add_argument("--log-level", default=None, choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    return parser


def resolve_log_level(cli_level: Optional[str] = None) -> str:
    """--log-level wins, then LMC_DEBUG, then LMC_LOG_LEVEL."""
    if cli_level:
        return cli_level.upper()
    if settings.debug:
        return "DEBUG"
    return settings.log_level.upper()


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = resolve_log_level(args.log_level)
    logging.basicConfig(
        level=getattr(logging, level),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    )

    logger.info("=" * 60)
    logger.info(f"{settings.app_name} v{settings.app_version}")
    logger.info(f"  - Config: {args.config}")
    if args.seed is not None:
        logger.info(f"  - Seed override: {args.seed}")
    if args.only:
        logger.info(f"  - Chỉ chạy check: {args.only}")
    logger.info("=" * 60)

    return run_service.run(args.config, seed=args.seed, out=args.out, only=args.only)


if __name__ == "__main__":
    sys.exit(main())
