"""Ranked-retrieval metrics, evaluation runs, and latency benchmarks.

Recall@k, MRR@k, and nDCG@k are computed per query against qrels and
aggregated as unweighted means. nDCG uses linear gain (grade / log2(rank+1))
by default; the exponential-gain variant (2^grade - 1) is available behind a
flag. Latency is wall-clock per query, excluding I/O, with the first ten
recorded queries discarded as warmup.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from protosearch.io import EmbeddingMatrix, Qrels, ValidationError
from protosearch.retrieval import (
    QueryBudget,
    RankedResult,
    default_expansion_budget,
    retrieve_bfs,
    retrieve_dot,
    retrieve_pathsum,
)
from protosearch.tree import CobwebTree

WARMUP_QUERIES = 10

METHODS = ("bfs", "pathsum", "dot")


def recall_at_k(result: RankedResult, relevant: set[str], k: int) -> float:
    """Fraction of the relevant docs present in the top-k."""
    if not relevant:
        raise ValidationError("relevant set is empty")
    top = set(result.doc_ids[:k])
    return len(top & relevant) / len(relevant)


def mrr_at_k(result: RankedResult, relevant: set[str], k: int) -> float:
    """Reciprocal rank of the first relevant doc within the top-k, else 0."""
    if not relevant:
        raise ValidationError("relevant set is empty")
    for rank, doc in enumerate(result.doc_ids[:k], start=1):
        if doc in relevant:
            return 1.0 / rank
    return 0.0


def ndcg_at_k(result: RankedResult, rels: dict[str, int], k: int,
              exponential_gain: bool = False) -> float:
    """Normalized discounted cumulative gain at cutoff k.

    Returns exactly 1.0 for any ranking that is optimal up to permutations
    of equal grades.
    """
    grades = sorted((g for g in rels.values() if g > 0), reverse=True)
    if not grades:
        raise ValidationError("all grades are zero")

    def gain(g: int) -> float:
        return float(2**g - 1) if exponential_gain else float(g)

    dcg = 0.0
    for rank, doc in enumerate(result.doc_ids[:k], start=1):
        g = rels.get(doc, 0)
        if g > 0:
            dcg += gain(g) / math.log2(rank + 1)
    idcg = sum(
        gain(g) / math.log2(rank + 1)
        for rank, g in enumerate(grades[:k], start=1)
    )
    return dcg / idcg


@dataclass
class LatencyStats:
    mean_ms: float
    p50_ms: float
    p95_ms: float


@dataclass
class EvalReport:
    per_cutoff: dict[int, dict[str, float]]  # k -> {recall, mrr, ndcg}
    query_count: int
    latency: LatencyStats
    method: str

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "query_count": self.query_count,
            "cutoffs": {
                str(k): dict(metrics) for k, metrics in sorted(self.per_cutoff.items())
            },
            "latency_ms": {
                "mean": self.latency.mean_ms,
                "p50": self.latency.p50_ms,
                "p95": self.latency.p95_ms,
            },
        }


def make_retriever(index, method: str, k: int, n_max: int | None = None):
    """Bind a retrieval method to a frozen tree or a corpus matrix."""
    if method == "dot":
        corpus = corpus_matrix(index)
        return lambda x: retrieve_dot(corpus, x, k)
    if not isinstance(index, CobwebTree):
        raise ValidationError(f"method {method!r} needs a tree index")
    if method == "pathsum":
        return lambda x: retrieve_pathsum(index, x, k)
    if method == "bfs":
        budget = QueryBudget(
            k, n_max if n_max is not None
            else default_expansion_budget(index.node_count, k)
        )
        return lambda x: retrieve_bfs(index, x, budget)
    raise ValidationError(f"unknown method {method!r}")


def corpus_matrix(index) -> EmbeddingMatrix:
    """The corpus as a matrix; trees reconstruct it from their leaves."""
    if isinstance(index, EmbeddingMatrix):
        return index
    if isinstance(index, CobwebTree):
        ids = index.doc_ids()
        if not ids:
            return EmbeddingMatrix(np.empty((0, index.dim), np.float32), [])
        data = np.stack([index.doc_vectors[d] for d in ids]).astype(np.float32)
        return EmbeddingMatrix(data, ids)
    raise ValidationError(f"cannot treat {type(index).__name__} as a corpus")


def run_eval(index, queries: EmbeddingMatrix, qrels: Qrels, method: str,
             cutoffs: list[int], n_max: int | None = None) -> EvalReport:
    """Retrieve for every judged query and aggregate metrics per cutoff."""
    if not cutoffs:
        raise ValidationError("need at least one cutoff")
    known = set(queries.ids)
    missing = sorted(q for q in qrels.query_ids if q not in known)
    if missing:
        raise ValidationError(
            f"qrels queries missing from embeddings: {', '.join(missing)}"
        )
    judged = set(qrels.query_ids)
    qids = [q for q in queries.ids if q in judged]
    k_max = max(cutoffs)
    retrieve = make_retriever(index, method, k_max, n_max)

    latencies = []
    sums = {k: {"recall": 0.0, "mrr": 0.0, "ndcg": 0.0} for k in cutoffs}
    for qid in qids:
        x = queries.row(qid)
        t0 = time.perf_counter()
        result = retrieve(x)
        latencies.append((time.perf_counter() - t0) * 1000.0)
        relevant = qrels.relevant_docs(qid)
        grades = qrels.grades(qid)
        for k in cutoffs:
            sums[k]["recall"] += recall_at_k(result, relevant, k)
            sums[k]["mrr"] += mrr_at_k(result, relevant, k)
            sums[k]["ndcg"] += ndcg_at_k(result, grades, k)

    n = len(qids)
    per_cutoff = {
        k: {m: (v / n if n else 0.0) for m, v in vals.items()}
        for k, vals in sums.items()
    }
    timed = latencies[WARMUP_QUERIES:] if len(latencies) > WARMUP_QUERIES else latencies
    arr = np.array(timed) if timed else np.zeros(1)
    latency = LatencyStats(
        mean_ms=float(arr.mean()),
        p50_ms=float(np.percentile(arr, 50)),
        p95_ms=float(np.percentile(arr, 95)),
    )
    return EvalReport(per_cutoff, n, latency, method)


@dataclass
class BenchRow:
    size: int
    method: str
    mean_ms: float
    p50_ms: float
    p95_ms: float
    node_count: int


def bench_scaling(sizes: list[int], methods: list[str], dim: int = 256,
                  trials: int = 50, k: int = 10, seed: int = 0,
                  n_max: int | None = None,
                  variance_floor: float = 1e-3) -> list[BenchRow]:
    """Mean per-query latency for each (corpus size, method) pair.

    Corpora are synthetic topic-structured paraphrase pairs (the shape that
    gives concept trees their usual ~1.5N node count); probe queries are
    drawn off-structure so best-first search cannot terminate early on an
    obvious match, which is the regime the tree methods differ in most.
    Best-first search runs with the expansion budget set to the full node
    count unless ``n_max`` is given. Single-threaded per-query timing with
    warmup; rows come back sorted by size.
    """
    from protosearch.synthetic import make_paired_corpus

    rng = np.random.default_rng(seed + 1)
    rows = []
    for size in sorted(sizes):
        corpus, _, _ = make_paired_corpus(n_docs=size, dim=dim, n_queries=1,
                                          seed=seed)
        probes = rng.standard_normal((trials, dim))
        tree = None
        if any(m != "dot" for m in methods):
            tree = CobwebTree(dim, variance_floor=variance_floor)
            for doc_id, vec in zip(corpus.ids, corpus.data64):
                tree.insert(doc_id, vec)
            tree.freeze()
        for method in methods:
            index = corpus if method == "dot" else tree
            budget = n_max
            if method == "bfs" and budget is None:
                budget = tree.node_count
            retrieve = make_retriever(index, method, k, budget)
            for i in range(min(WARMUP_QUERIES, trials)):
                retrieve(probes[i])
            lat = []
            for i in range(trials):
                t0 = time.perf_counter()
                retrieve(probes[i])
                lat.append((time.perf_counter() - t0) * 1000.0)
            arr = np.array(lat)
            rows.append(BenchRow(
                size=size,
                method=method,
                mean_ms=float(arr.mean()),
                p50_ms=float(np.percentile(arr, 50)),
                p95_ms=float(np.percentile(arr, 95)),
                node_count=tree.node_count if tree is not None else size,
            ))
    return rows
