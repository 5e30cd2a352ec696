"""CLI: embed --in texts.csv --model <id> --out store.emb [--no-normalize]"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .encoding import EmbedderError, EncodeJob, encode


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embed", description="Encode id,text pairs into an EMB1 embedding store."
    )
    parser.add_argument("--in", dest="input", type=Path, required=True,
                        help="input CSV with columns id,text")
    parser.add_argument("--model", required=True, help="sentence-embedding model id")
    parser.add_argument("--out", type=Path, required=True, help="output .emb path")
    parser.add_argument("--batch-size", type=int, default=32)
    parser.add_argument("--no-normalize", action="store_true",
                        help="keep raw model vectors instead of unit-normalizing")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        job = EncodeJob(
            input_path=args.input,
            model_id=args.model,
            output_path=args.out,
            batch_size=args.batch_size,
            normalize=not args.no_normalize,
        )
        encode(job)
        print(f"wrote {args.out}")
        return 0
    except EmbedderError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
