"""Command-line entry point wiring the whiten/build/query/eval/bench/export
pipelines together.

Configuration precedence: built-in defaults < ``--config`` key=value file <
command-line flags. Every run logs its resolved configuration to stderr as a
single JSON line. Exit codes: 0 success, 1 validation/data error, 2 usage
error. Tabular output is TSV on stdout; reports are JSON; logs go to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from protosearch import evaluation, retrieval, tree as tree_mod, whitening
from protosearch.io import (
    FormatError,
    ValidationError,
    read_docstore,
    read_embeddings,
    read_qrels,
)

DEFAULTS = {
    "whiten_threshold": 0.96,
    "use_ica": True,
    "variance_floor": 1e-3,
    "seed": 0,
    "cutoffs": "5,10",
    "k": 10,
}


class UsageError(Exception):
    pass


def _read_config_file(path: str) -> dict:
    """Parse a flat key=value config file (# comments, blank lines ok)."""
    values: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}: line {lineno}: expected key=value")
        key, _, value = line.partition("=")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _coerce(key: str, raw: str):
    if key in ("whiten_threshold", "variance_floor"):
        return float(raw)
    if key in ("seed", "k", "n_max", "ica_seed", "max_depth", "trials", "dim"):
        return int(raw)
    if key in ("use_ica", "no_ica", "explain", "include_leaf_score",
               "depth_normalize", "exponential_gain"):
        return raw.strip().lower() in ("1", "true", "yes", "on")
    return raw


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="protosearch",
        description="Hierarchical prototype retrieval over dense embeddings.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key=value config file; flags win")
        p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("whiten", help="fit a whitening transform on a corpus")
    common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--whiten-threshold", type=float, default=None)
    p.add_argument("--no-ica", action="store_true", default=None)
    p.add_argument("--ica-seed", type=int, default=None)
    p.add_argument("--emit", help="also write the whitened corpus here")

    p = sub.add_parser("build", help="build a concept tree from embeddings")
    common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--variance-floor", type=float, default=None)
    p.add_argument("--shuffle-seed", type=int, default=None)
    p.add_argument("--whiten", help="apply this transform to the corpus first")

    p = sub.add_parser("query", help="rank documents for query embeddings")
    common(p)
    p.add_argument("--tree", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--method", choices=evaluation.METHODS, required=True)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--n-max", type=int, default=None)
    p.add_argument("--whiten")
    p.add_argument("--explain", action="store_true", default=None)
    p.add_argument("--include-leaf-score", action="store_true", default=None)
    p.add_argument("--depth-normalize", action="store_true", default=None)

    p = sub.add_parser("eval", help="compute retrieval metrics against qrels")
    common(p)
    p.add_argument("--tree")
    p.add_argument("--corpus")
    p.add_argument("--queries", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--method", choices=evaluation.METHODS, required=True)
    p.add_argument("--cutoffs", default=None, help="comma-separated, e.g. 5,10")
    p.add_argument("--n-max", type=int, default=None)
    p.add_argument("--whiten")
    p.add_argument("--out", help="write the JSON report here instead of stdout")

    p = sub.add_parser("bench", help="latency across synthetic corpus sizes")
    common(p)
    p.add_argument("--sizes", required=True, help="comma-separated corpus sizes")
    p.add_argument("--methods", default="dot,pathsum,bfs")
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--n-max", type=int, default=None)
    p.add_argument("--variance-floor", type=float, default=None)

    p = sub.add_parser("export", help="dump a tree as JSON or DOT")
    common(p)
    p.add_argument("--tree", required=True)
    p.add_argument("--format", choices=("json", "dot"), default="json")
    p.add_argument("--docs", help="doc_id<TAB>text store for leaf labels")
    p.add_argument("--max-depth", type=int, default=None)
    p.add_argument("--out")

    return parser


def _resolve(args: argparse.Namespace) -> dict:
    """Merge defaults, config-file values, and explicit flags."""
    config = dict(DEFAULTS)
    if getattr(args, "config", None):
        for key, raw in _read_config_file(args.config).items():
            config[key] = _coerce(key, raw)
    for key, value in vars(args).items():
        if key == "config" or value is None:
            continue
        config[key] = value
    if config.pop("no_ica", False):
        config["use_ica"] = False
    config["command"] = args.command
    return config


def _log_config(config: dict) -> None:
    printable = {
        k: v for k, v in sorted(config.items()) if not k.startswith("_")
    }
    print(json.dumps(printable, default=str), file=sys.stderr)


def _load_index(config):
    """Load the queryable index (tree, or corpus matrix for dot)."""
    if config.get("tree"):
        return tree_mod.load_tree(config["tree"])
    if config.get("corpus"):
        return read_embeddings(config["corpus"])
    raise UsageError("need --tree or --corpus")


def _maybe_whiten(config, matrix):
    if config.get("whiten"):
        transform = whitening.load_transform(config["whiten"])
        return whitening.apply_whitening(transform, matrix)
    return matrix


def cmd_whiten(config) -> int:
    if not config["use_ica"] and config.get("ica_seed") is not None:
        raise UsageError("--ica-seed conflicts with --no-ica")
    corpus = read_embeddings(config["corpus"])
    seed = config.get("ica_seed", config["seed"])
    if seed is None:
        seed = config["seed"]
    transform = whitening.fit_whitening(
        corpus,
        threshold=config["whiten_threshold"],
        use_ica=config["use_ica"],
        seed=seed,
    )
    whitening.save_transform(transform, config["out"])
    if config.get("emit"):
        from protosearch.io import write_embeddings

        write_embeddings(whitening.apply_whitening(transform, corpus), config["emit"])
    print(
        f"fitted whitening {transform.input_dim} -> {transform.output_dim} dims",
        file=sys.stderr,
    )
    return 0


def cmd_build(config) -> int:
    corpus = _maybe_whiten(config, read_embeddings(config["corpus"]))
    order = np.arange(corpus.count)
    if config.get("shuffle_seed") is not None:
        order = np.random.default_rng(config["shuffle_seed"]).permutation(order)
    t = tree_mod.CobwebTree(corpus.dim, variance_floor=config["variance_floor"])
    for i in order:
        t.insert(corpus.ids[int(i)], corpus.data64[int(i)])
    t.freeze()
    tree_mod.save_tree(t, config["out"])
    print(
        f"built tree: {t.leaf_count} docs, {t.node_count} nodes",
        file=sys.stderr,
    )
    return 0


def cmd_query(config) -> int:
    index = tree_mod.load_tree(config["tree"])
    queries = _maybe_whiten(config, read_embeddings(config["queries"]))
    method = config["method"]
    k = config["k"]
    if method == "pathsum" and (config.get("include_leaf_score")
                                or config.get("depth_normalize")):
        def retrieve(x):
            return retrieval.retrieve_pathsum(
                index, x, k,
                include_leaf_score=bool(config.get("include_leaf_score")),
                depth_normalize=bool(config.get("depth_normalize")),
            )
    else:
        retrieve = evaluation.make_retriever(index, method, k, config.get("n_max"))

    out = sys.stdout
    for qi in range(queries.count):
        qid = queries.ids[qi]
        x = queries.data64[qi]
        result = retrieve(x)
        for rank, (doc, score) in enumerate(result.entries, start=1):
            out.write(f"{qid}\t{rank}\t{doc}\t{score:.6f}\n")
            if config.get("explain") and result.paths and doc in result.paths:
                path = result.paths[doc]
                parts = []
                for nid in path:
                    node = index.node(nid)
                    s = retrieval.collocation_logscore(node, x, index.variance_floor)
                    parts.append(f"{nid}(n={node.count}, s={s:.3f})")
                out.write(f"# {qid}\t{doc}\tpath: " + " -> ".join(parts) + "\n")
    return 0


def cmd_eval(config) -> int:
    index = _load_index(config)
    queries = _maybe_whiten(config, read_embeddings(config["queries"]))
    qrels = read_qrels(config["qrels"])
    cutoffs = [int(c) for c in str(config["cutoffs"]).split(",") if c]
    report = evaluation.run_eval(
        index, queries, qrels, config["method"], cutoffs, config.get("n_max")
    )
    payload = json.dumps(report.to_dict(), indent=2)
    if config.get("out"):
        Path(config["out"]).write_text(payload + "\n")
    else:
        print(payload)
    lines = [f"method={report.method} queries={report.query_count}"]
    header = f"{'k':>4}  {'Recall':>8}  {'MRR':>8}  {'nDCG':>8}"
    lines.append(header)
    for k in sorted(report.per_cutoff):
        m = report.per_cutoff[k]
        lines.append(
            f"{k:>4}  {m['recall']:>8.4f}  {m['mrr']:>8.4f}  {m['ndcg']:>8.4f}"
        )
    lines.append(
        f"latency mean={report.latency.mean_ms:.2f}ms "
        f"p50={report.latency.p50_ms:.2f}ms p95={report.latency.p95_ms:.2f}ms"
    )
    print("\n".join(lines), file=sys.stderr)
    return 0


def cmd_bench(config) -> int:
    sizes = [int(s) for s in str(config["sizes"]).split(",") if s]
    methods = [m.strip() for m in str(config["methods"]).split(",") if m.strip()]
    for m in methods:
        if m not in evaluation.METHODS:
            raise UsageError(f"unknown method {m!r}")
    rows = evaluation.bench_scaling(
        sizes,
        methods,
        dim=config["dim"],
        trials=config["trials"],
        k=config["k"],
        seed=config["seed"],
        n_max=config.get("n_max"),
        variance_floor=config["variance_floor"],
    )
    print("size\tmethod\tmean_ms\tp50_ms\tp95_ms\tnodes")
    for r in rows:
        print(f"{r.size}\t{r.method}\t{r.mean_ms:.3f}\t{r.p50_ms:.3f}"
              f"\t{r.p95_ms:.3f}\t{r.node_count}")
    return 0


def cmd_export(config) -> int:
    t = tree_mod.load_tree(config["tree"])
    docs = read_docstore(config["docs"]) if config.get("docs") else None
    payload = tree_mod.export_tree(
        t, docs=docs, fmt=config["format"], max_depth=config.get("max_depth")
    )
    if config.get("out"):
        Path(config["out"]).write_bytes(payload)
    else:
        sys.stdout.write(payload.decode("utf-8"))
    return 0


_COMMANDS = {
    "whiten": cmd_whiten,
    "build": cmd_build,
    "query": cmd_query,
    "eval": cmd_eval,
    "bench": cmd_bench,
    "export": cmd_export,
}


def run(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help and 2 for usage problems
        return int(exc.code or 0)
    try:
        config = _resolve(args)
        _log_config(config)
        return _COMMANDS[args.command](config)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (FormatError, ValidationError, whitening.FitError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
