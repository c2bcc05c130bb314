"""embed-export: dump transformer embeddings in the engine's file format."""

from __future__ import annotations

import argparse
import sys

from .export import ExportError, ExportJob, export


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embed-export",
        description="Export per-token or pooled transformer embeddings as engine-format JSONL",
    )
    parser.add_argument("--model", required=True, help="HF model name or local checkpoint path")
    parser.add_argument("--input", required=True, help="queries or corpus JSONL")
    parser.add_argument("--mode", choices=["token", "item"], required=True)
    parser.add_argument("--out", required=True)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--vocab", help="engine vocabulary file (required for token mode)")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--batch-size", type=int, default=16)
    parser.add_argument("--max-occurrences", type=int, default=32,
                        help="occurrences averaged per vocabulary term (token mode)")
    parser.add_argument("--dim", type=int, help="assert the model hidden size")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        job = ExportJob(
            model=args.model,
            input_path=args.input,
            mode=args.mode,
            output_path=args.out,
            seed=args.seed,
            vocab_path=args.vocab,
            device=args.device,
            batch_size=args.batch_size,
            max_occurrences=args.max_occurrences,
            dimension=args.dim,
        )
        out = export(job)
    except (ExportError, OSError) as exc:
        print(f"embed-export: error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
