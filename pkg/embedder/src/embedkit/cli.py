"""Console entry points: ``embed`` and ``prepare``."""

from __future__ import annotations

import argparse
import logging
import sys

from embedkit.datasets import DATASETS, prepare_dataset
from embedkit.embed import EmbedJob, embed_corpus
from embedkit.pooling import POOLINGS


def _setup_logging():
    logging.basicConfig(
        level=logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def embed_main(argv=None) -> None:
    parser = argparse.ArgumentParser(
        prog="embed",
        description="Pool transformer hidden states into an embedding file.",
    )
    parser.add_argument("--model", required=True,
                        help="checkpoint name or local directory")
    parser.add_argument("--pooling", choices=POOLINGS, default="mean")
    parser.add_argument("--in", dest="input_tsv", required=True,
                        help="id<TAB>text TSV")
    parser.add_argument("--out", required=True, help="output embedding file")
    parser.add_argument("--batch-size", type=int, default=32)
    parser.add_argument("--max-tokens", type=int, default=256)
    args = parser.parse_args(argv)
    _setup_logging()
    job = EmbedJob(
        model_name=args.model,
        input_tsv=args.input_tsv,
        output=args.out,
        pooling=args.pooling,
        batch_size=args.batch_size,
        max_tokens=args.max_tokens,
    )
    try:
        count = embed_corpus(job)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        sys.exit(1)
    print(f"wrote {count} embeddings to {args.out}", file=sys.stderr)


def prepare_main(argv=None) -> None:
    parser = argparse.ArgumentParser(
        prog="prepare",
        description="Sample a retrieval dataset from raw QQP / MS MARCO files.",
    )
    parser.add_argument("--dataset", choices=DATASETS, required=True)
    parser.add_argument("--n-docs", type=int, required=True)
    parser.add_argument("--n-queries", type=int, required=True)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--raw-dir", default="raw",
                        help="directory with the raw dataset files")
    parser.add_argument("--out-dir", default=".")
    args = parser.parse_args(argv)
    _setup_logging()
    try:
        paths = prepare_dataset(
            args.dataset, args.n_docs, args.n_queries, args.seed,
            args.raw_dir, args.out_dir,
        )
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        sys.exit(1)
    for kind, path in paths.items():
        print(f"{kind}\t{path}")


if __name__ == "__main__":
    embed_main()
