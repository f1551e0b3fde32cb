"""Command-line entry point: m2df-score MANIFEST --out scores.jsonl."""

from __future__ import annotations

import argparse
import json
import sys

from .backends import DEFAULT_DIM, BackendSpec
from .scoring import score_corpus


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="m2df-score",
        description="Produce a raw similarity score file from an instance manifest",
    )
    parser.add_argument("manifest", help="manifest.jsonl path")
    parser.add_argument("--out", required=True, help="output scores.jsonl path")
    parser.add_argument("--backend", choices=["stub", "external"], default="stub")
    parser.add_argument("--dim", type=int, default=DEFAULT_DIM, help="embedding dimension")
    parser.add_argument("--seed", type=int, default=0, help="stub embedding seed")
    parser.add_argument("--module", default=None,
                        help="module path providing the external callables")
    parser.add_argument("--callables", default=None,
                        help="JSON object remapping callable names, e.g. "
                             '\'{"text_embed": "my_encoder"}\'')
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    callables = json.loads(args.callables) if args.callables else {}
    try:
        spec = BackendSpec(name=args.backend, dim=args.dim, seed=args.seed,
                           module=args.module, callables=callables)
        count = score_corpus(args.manifest, spec, args.out)
    except FileNotFoundError as exc:
        print(f"m2df-score: error: {exc.filename}: no such file", file=sys.stderr)
        return 1
    except (ValueError, ImportError, AttributeError) as exc:
        print(f"m2df-score: error: {exc}", file=sys.stderr)
        return 1
    print(f"scored {count} instances -> {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
