"""Hierarchical prototype retrieval over dense document embeddings.

Builds an incremental tree of diagonal-Gaussian concept prototypes over a
corpus of embeddings and ranks documents coarse-to-fine, with an exact
dot-product baseline and an evaluation/benchmark harness.
"""

from protosearch.io import (
    DocStore,
    EmbeddingMatrix,
    FormatError,
    Qrels,
    ValidationError,
    read_embeddings,
    read_qrels,
    write_embeddings,
)
from protosearch.tree import CobwebTree, ConceptNode, category_utility, node_entropy
from protosearch.retrieval import (
    QueryBudget,
    RankedResult,
    collocation_logscore,
    log_likelihood,
    retrieve_bfs,
    retrieve_dot,
    retrieve_pathsum,
)
from protosearch.whitening import WhiteningTransform, apply_whitening, fit_whitening

__version__ = "0.1.0"

__all__ = [
    "CobwebTree",
    "ConceptNode",
    "DocStore",
    "EmbeddingMatrix",
    "FormatError",
    "Qrels",
    "QueryBudget",
    "RankedResult",
    "ValidationError",
    "WhiteningTransform",
    "apply_whitening",
    "category_utility",
    "collocation_logscore",
    "fit_whitening",
    "log_likelihood",
    "node_entropy",
    "read_embeddings",
    "read_qrels",
    "retrieve_bfs",
    "retrieve_dot",
    "retrieve_pathsum",
    "write_embeddings",
]
