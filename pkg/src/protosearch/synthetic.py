"""Synthetic clustered corpora for tests and benchmarks."""

from __future__ import annotations

import numpy as np

from protosearch.io import EmbeddingMatrix, Qrels


def make_cluster_benchmark(n_clusters: int = 20, docs_per_cluster: int = 50,
                           dim: int = 32, sigma: float = 0.3,
                           n_queries: int = 200, seed: int = 0):
    """Isotropic Gaussian clusters with fresh same-cluster query samples.

    Cluster centers are drawn from N(0, I); documents and queries are
    centers plus N(0, sigma^2 I) noise. Every document of the query's
    cluster is judged relevant (grade 1).

    Returns (corpus, queries, qrels).
    """
    rng = np.random.default_rng(seed)
    centers = rng.standard_normal((n_clusters, dim))

    doc_ids = []
    doc_rows = []
    cluster_docs: list[list[str]] = [[] for _ in range(n_clusters)]
    for c in range(n_clusters):
        noise = rng.normal(scale=sigma, size=(docs_per_cluster, dim))
        for j in range(docs_per_cluster):
            doc_id = f"d{c:03d}_{j:03d}"
            doc_ids.append(doc_id)
            doc_rows.append(centers[c] + noise[j])
            cluster_docs[c].append(doc_id)

    q_ids = []
    q_rows = []
    entries: dict[tuple[str, str], int] = {}
    q_clusters = rng.integers(0, n_clusters, size=n_queries)
    for i, c in enumerate(q_clusters):
        qid = f"q{i:04d}"
        q_ids.append(qid)
        q_rows.append(centers[c] + rng.normal(scale=sigma, size=dim))
        for did in cluster_docs[c]:
            entries[(qid, did)] = 1

    corpus = EmbeddingMatrix(np.array(doc_rows, dtype=np.float32), doc_ids)
    queries = EmbeddingMatrix(np.array(q_rows, dtype=np.float32), q_ids)
    return corpus, queries, Qrels(entries)


def make_paired_corpus(n_docs: int, dim: int = 256, n_queries: int = 50,
                       topics: int = 50, subtopics_per_topic: int = 16,
                       seed: int = 0):
    """Topic-structured corpus of near-duplicate document pairs.

    Documents come in pairs (a base vector plus a tiny perturbation) nested
    under subtopic and topic centers, so a concept tree built on them carries
    substantial internal structure, the shape real paraphrase corpora
    produce. Queries are fresh perturbations of random base vectors; the
    matching pair is judged relevant.

    Returns (corpus, queries, qrels).
    """
    rng = np.random.default_rng(seed)
    n_pairs = n_docs // 2
    topic_centers = rng.standard_normal((topics, dim))
    sub_centers = topic_centers.repeat(subtopics_per_topic, axis=0) \
        + 0.35 * rng.standard_normal((topics * subtopics_per_topic, dim))

    doc_ids, doc_rows = [], []
    bases = []
    for p in range(n_pairs):
        sub = sub_centers[p % len(sub_centers)]
        base = sub + 0.12 * rng.standard_normal(dim)
        bases.append(base)
        for side in ("a", "b"):
            doc_ids.append(f"p{p:05d}{side}")
            doc_rows.append(base + 0.03 * rng.standard_normal(dim))
    if n_docs % 2:
        doc_ids.append("odd")
        doc_rows.append(sub_centers[0] + 0.12 * rng.standard_normal(dim))

    q_ids, q_rows = [], []
    entries: dict[tuple[str, str], int] = {}
    targets = rng.integers(0, n_pairs, size=n_queries)
    for i, p in enumerate(targets):
        qid = f"q{i:04d}"
        q_ids.append(qid)
        q_rows.append(bases[p] + 0.03 * rng.standard_normal(dim))
        entries[(qid, f"p{p:05d}a")] = 1
        entries[(qid, f"p{p:05d}b")] = 1

    corpus = EmbeddingMatrix(np.array(doc_rows, dtype=np.float32), doc_ids)
    queries = EmbeddingMatrix(np.array(q_rows, dtype=np.float32), q_ids)
    return corpus, queries, Qrels(entries)
