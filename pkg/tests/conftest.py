import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from protosearch.io import EmbeddingMatrix
from protosearch.tree import CobwebTree


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def small_matrix():
    data = np.arange(12, dtype=np.float32).reshape(4, 3)
    return EmbeddingMatrix(data, ["d0", "d1", "d2", "d3"])


def build_tree(vectors, ids=None, floor=1e-3, trace=None):
    """Insert rows in order and return the unfrozen tree."""
    vectors = np.asarray(vectors, dtype=np.float64)
    if ids is None:
        ids = [f"d{i}" for i in range(len(vectors))]
    tree = CobwebTree(vectors.shape[1], variance_floor=floor)
    for doc_id, vec in zip(ids, vectors):
        tree.insert(doc_id, vec, trace=trace)
    return tree


@pytest.fixture
def two_cluster_tree():
    """The four-point, two-cluster tree (clusters interleaved on insert)."""
    pts = {
        "a1": [0.0, 0.0],
        "b1": [10.0, 10.0],
        "a2": [0.1, 0.0],
        "b2": [10.1, 10.0],
    }
    tree = CobwebTree(2)
    for doc, vec in pts.items():
        tree.insert(doc, np.array(vec))
    tree.freeze()
    return tree
