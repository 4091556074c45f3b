"""Sentence-embedding extraction and retrieval-dataset preparation.

Pools final hidden states of pretrained transformer checkpoints
(encoder-only, decoder-only, or encoder-decoder) into fixed-size vectors and
writes them in the binary embedding format the protosearch engine loads.
"""

from embedkit.embed import EmbedJob, embed_corpus
from embedkit.datasets import prepare_dataset

__version__ = "0.1.0"

__all__ = ["EmbedJob", "embed_corpus", "prepare_dataset"]
