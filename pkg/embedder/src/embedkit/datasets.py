"""Retrieval-dataset preparation from raw QQP / MS MARCO files.

Samples a query set whose positive documents are guaranteed present in the
corpus, fills the remaining corpus slots with distractors, and writes the
three TSVs (corpus, queries, qrels) the retrieval engine consumes.

Expected raw files under ``raw_dir``:

* qqp: ``train.tsv`` with header ``id qid1 qid2 question1 question2
  is_duplicate`` (tab-separated, the GLUE distribution).
* msmarco: ``collection.tsv`` (``pid<TAB>passage``), ``queries.tsv``
  (``qid<TAB>query``), ``qrels.tsv`` (TREC style ``qid 0 pid rel``, tab or
  space separated).
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from embedkit.cweb import write_qrels_tsv, write_text_tsv

logger = logging.getLogger(__name__)

DATASETS = ("qqp", "msmarco")


def prepare_dataset(name: str, n_docs: int, n_queries: int, seed: int,
                    raw_dir, out_dir) -> dict[str, Path]:
    """Sample and write corpus/queries/qrels TSVs; deterministic under seed.

    Returns the three output paths keyed by ``corpus``, ``queries``,
    ``qrels``.
    """
    if name not in DATASETS:
        raise ValueError(f"unknown dataset {name!r}")
    if n_queries < 1 or n_docs < 1:
        raise ValueError("n_docs and n_queries must be positive")
    raw_dir = Path(raw_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    if name == "qqp":
        queries, positives, doc_texts = _load_qqp(raw_dir / "train.tsv")
    else:
        queries, positives, doc_texts = _load_msmarco(raw_dir)

    candidates = sorted(q for q in queries if positives.get(q))
    if n_queries > len(candidates):
        raise ValueError(
            f"requested {n_queries} queries but only {len(candidates)} "
            f"raw queries have a positive document"
        )

    rng = np.random.default_rng(seed)
    picked = [candidates[i] for i in
              rng.choice(len(candidates), size=n_queries, replace=False)]

    corpus_ids: list[str] = []
    seen: set[str] = set()
    entries: list[tuple[str, str, int]] = []
    for qid in picked:
        for did, rel in sorted(positives[qid].items()):
            entries.append((qid, did, rel))
            if did not in seen:
                seen.add(did)
                corpus_ids.append(did)
    if len(corpus_ids) > n_docs:
        raise ValueError(
            f"{len(corpus_ids)} positive documents do not fit a corpus of "
            f"{n_docs}; raise n_docs or lower n_queries"
        )

    distractors = sorted(d for d in doc_texts if d not in seen)
    n_fill = n_docs - len(corpus_ids)
    if n_fill > len(distractors):
        raise ValueError(
            f"not enough distractor documents ({len(distractors)}) to fill "
            f"the corpus to {n_docs}"
        )
    fill = [distractors[i] for i in
            rng.choice(len(distractors), size=n_fill, replace=False)]
    corpus_ids.extend(fill)

    paths = {
        "corpus": out_dir / f"{name}_corpus.tsv",
        "queries": out_dir / f"{name}_queries.tsv",
        "qrels": out_dir / f"{name}_qrels.tsv",
    }
    write_text_tsv([(d, doc_texts[d]) for d in corpus_ids], paths["corpus"])
    write_text_tsv([(q, queries[q]) for q in picked], paths["queries"])
    write_qrels_tsv(entries, paths["qrels"])
    logger.info("prepared %s: %d docs, %d queries, %d judgments",
                name, len(corpus_ids), len(picked), len(entries))
    return paths


def _load_qqp(path: Path):
    """Duplicate question pairs: question1 is the query, question2 the doc."""
    queries: dict[str, str] = {}
    positives: dict[str, dict[str, int]] = {}
    doc_texts: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        idx = {name: i for i, name in enumerate(header)}
        for col in ("qid1", "qid2", "question1", "question2", "is_duplicate"):
            if col not in idx:
                raise ValueError(f"{path}: missing column {col!r}")
        for line in fh:
            parts = line.rstrip("\n").split("\t")
            if len(parts) != len(header):
                continue  # raw QQP has a handful of ragged lines
            q1, q2 = parts[idx["question1"]], parts[idx["question2"]]
            if not q1.strip() or not q2.strip():
                continue
            qid = f"q{parts[idx['qid1']]}"
            did = f"d{parts[idx['qid2']]}"
            doc_texts.setdefault(did, q2)
            if parts[idx["is_duplicate"]] == "1":
                queries.setdefault(qid, q1)
                positives.setdefault(qid, {})[did] = 1
    return queries, positives, doc_texts


def _load_msmarco(raw_dir: Path):
    """Passage collection with TREC-style graded qrels."""
    doc_texts: dict[str, str] = {}
    with open(raw_dir / "collection.tsv", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            pid, _, text = line.partition("\t")
            if text.strip():
                doc_texts[f"d{pid}"] = text
    queries: dict[str, str] = {}
    with open(raw_dir / "queries.tsv", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            qid, _, text = line.partition("\t")
            if text.strip():
                queries[f"q{qid}"] = text
    positives: dict[str, dict[str, int]] = {}
    with open(raw_dir / "qrels.tsv", encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if len(parts) != 4:
                continue
            qid, _, pid, rel = parts
            qid, did = f"q{qid}", f"d{pid}"
            if int(rel) >= 1 and qid in queries and did in doc_texts:
                cur = positives.setdefault(qid, {})
                cur[did] = max(int(rel), cur.get(did, 0))
    return queries, positives, doc_texts
