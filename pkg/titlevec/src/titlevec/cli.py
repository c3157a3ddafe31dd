"""Command-line entry point for the title vector export."""

from __future__ import annotations

import argparse
import sys

from .encoder import DEFAULT_MODEL, TRANSFORMER_DIM, EncoderUnavailable
from .export import ExportJob, export_vectors


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="titlevec-export",
        description="Encode publication titles into the pipeline's vector file format",
    )
    parser.add_argument("--in", dest="input_csv", required=True,
                        help="CSV of entity_iri,title rows")
    parser.add_argument("--out", dest="output_path", required=True,
                        help="vector file to write")
    parser.add_argument("--model", default=DEFAULT_MODEL,
                        help=f"model identifier, or 'hash' for the offline encoder "
                             f"(default {DEFAULT_MODEL})")
    parser.add_argument("--batch-size", type=int, default=32)
    parser.add_argument("--dim", type=int, default=TRANSFORMER_DIM,
                        help="output dimension for the hash encoder (default 768)")
    parser.add_argument("--seed", type=int, default=0,
                        help="hash encoder seed")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    job = ExportJob(
        input_csv=args.input_csv,
        output_path=args.output_path,
        model_id=args.model,
        batch_size=args.batch_size,
        dim=args.dim,
        seed=args.seed,
    )
    try:
        out = export_vectors(job)
    except (EncoderUnavailable, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
