"""Batch embedding of text corpora with pretrained transformers."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import torch

from embedkit.cweb import read_text_tsv, write_embedding_file
from embedkit.pooling import check_pooling, model_kind, pool_hidden_states

logger = logging.getLogger(__name__)


@dataclass
class EmbedJob:
    model_name: str
    input_tsv: str
    output: str
    pooling: str = "mean"
    batch_size: int = 32
    max_tokens: int = 256

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")


def load_model(model_name: str):
    """Load tokenizer and base model; returns (tokenizer, model, kind)."""
    from transformers import AutoModel, AutoTokenizer

    tokenizer = AutoTokenizer.from_pretrained(model_name)
    model = AutoModel.from_pretrained(model_name, dtype=torch.float32)
    model.eval()
    kind = model_kind(model.config)
    if tokenizer.pad_token is None:
        tokenizer.pad_token = tokenizer.eos_token or tokenizer.unk_token
    return tokenizer, model, kind


@torch.no_grad()
def embed_texts(texts: list[str], tokenizer, model, kind: str, pooling: str,
                batch_size: int, max_tokens: int) -> np.ndarray:
    """Embed texts in order; returns float32 (len(texts), hidden) rows."""
    encoder = model.get_encoder() if kind == "encoder-decoder" else model
    rows = []
    truncated = 0
    for start in range(0, len(texts), batch_size):
        batch = texts[start:start + batch_size]
        full = tokenizer(batch, padding=False, truncation=False)["input_ids"]
        truncated += sum(len(seq) > max_tokens for seq in full)
        enc = tokenizer(
            batch,
            padding=True,
            truncation=True,
            max_length=max_tokens,
            return_tensors="pt",
        )
        out = encoder(input_ids=enc["input_ids"],
                      attention_mask=enc["attention_mask"])
        pooled = pool_hidden_states(
            out.last_hidden_state, enc["attention_mask"], pooling
        )
        rows.append(pooled.to(torch.float32).cpu().numpy())
    if truncated:
        logger.warning("%d of %d texts exceeded max_tokens=%d and were truncated",
                       truncated, len(texts), max_tokens)
    if not rows:
        hidden = getattr(model.config, "hidden_size", None) or model.config.d_model
        return np.zeros((0, hidden), dtype=np.float32)
    return np.concatenate(rows, axis=0)


def embed_corpus(job: EmbedJob) -> int:
    """Embed an ``id<TAB>text`` TSV and write the binary embedding file.

    One output row per input line, order preserved; returns the row count.
    """
    rows = read_text_tsv(job.input_tsv)
    ids = [r[0] for r in rows]
    texts = [r[1] for r in rows]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate ids in input")
    for id_, text in rows:
        if not text.strip():
            raise ValueError(f"empty text for id {id_!r}")

    tokenizer, model, kind = load_model(job.model_name)
    check_pooling(job.pooling, kind)
    data = embed_texts(texts, tokenizer, model, kind, job.pooling,
                       job.batch_size, job.max_tokens)
    write_embedding_file(data, ids, job.output)
    logger.info("embedded %d texts -> %s (dim %d)", len(ids), job.output,
                data.shape[1] if data.size else 0)
    return len(ids)
