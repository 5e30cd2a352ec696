"""Command-line entry point.

    exposure-lab <stage> --config <path> [--out <dir>] [--threads N] [--seed N]
    exposure-lab make-fixture --out <dir> [--seed N]

Exit codes: 0 ok, 2 validation failure, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import load_config
from .errors import ConfigError, DataError, ExposureLabError, NumericalError
from .pipeline import STAGES, run

logger = logging.getLogger(__name__)


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="exposure-lab",
        description="Technology-exposure indices, new-work detection, and "
        "panel estimation from tagged Q&A corpora.",
    )
    parser.add_argument(
        "stage",
        choices=list(STAGES) + ["all", "make-fixture"],
        help="pipeline stage to run (or make-fixture to generate synthetic inputs)",
    )
    parser.add_argument("--config", type=Path, help="run configuration file")
    parser.add_argument("--out", type=Path, help="output directory override")
    parser.add_argument(
        "--threads",
        type=int,
        default=1,
        help="worker hint; stages are deterministic at any thread count",
    )
    parser.add_argument(
        "--seed", type=int, default=0, help="seed for fixture generation"
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.stage == "make-fixture":
            if args.out is None:
                raise ConfigError("make-fixture requires --out")
            from .fixture import generate_fixture

            generate_fixture(args.out, seed=args.seed)
            print(f"fixture written to {args.out}")
            return 0
        if args.config is None:
            raise ConfigError("--config is required")
        cfg = load_config(args.config)
        executed = run(args.stage, cfg, args.out)
        for name, counts in executed.items():
            print(f"{name}: {counts}")
        return 0
    except ConfigError as exc:
        logger.error("validation failure: %s", exc)
        return 2
    except DataError as exc:
        logger.error("data error: %s", exc)
        return 3
    except NumericalError as exc:
        logger.error("numerical failure: %s", exc)
        return 4
    except ExposureLabError as exc:
        logger.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
