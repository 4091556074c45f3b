"""Query scoring and ranking over a frozen tree, plus the flat baseline.

Both tree-based rankers rely on the collocation score of a concept node.
Under a uniform prior over concepts it is a monotone transform of the query
log-likelihood, so in log space we use ``2 * log p(x | c)`` and drop the
constant normalizer.

Three rankers:

* best-first search: budgeted priority-queue descent emitting leaves in
  exploration order;
* path-sum: every node scored in one batched pass, each leaf ranked by the
  summed scores of the internal nodes on its root-to-leaf path;
* dot: exact inner product against the full corpus matrix.

All ranking ties break by ascending node id (tree methods) or corpus row
order (dot).
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from protosearch import kernels
from protosearch.io import EmbeddingMatrix, ValidationError
from protosearch.tree import CobwebTree, ConceptNode


@dataclass(frozen=True)
class QueryBudget:
    """Result count and node-expansion cap for best-first search."""
    k: int
    n_max: int

    def __post_init__(self):
        if self.k < 1:
            raise ValidationError(f"k must be >= 1, got {self.k}")
        if self.n_max < 1:
            raise ValidationError(f"n_max must be >= 1, got {self.n_max}")


def default_expansion_budget(node_count: int, k: int) -> int:
    """Heuristic expansion cap: 4 * k * ceil(log2(node_count + 1))."""
    return max(1, 4 * k * math.ceil(math.log2(node_count + 1)))


@dataclass
class RankedResult:
    """Ranked document ids with scores and optional concept paths."""
    entries: list[tuple[str, float]]
    method: str
    paths: dict[str, list[int]] | None = None

    @property
    def doc_ids(self) -> list[str]:
        return [d for d, _ in self.entries]


def log_likelihood(node: ConceptNode, x: np.ndarray, floor: float) -> float:
    """log p(x | node) under the node's diagonal Gaussian."""
    return kernels.loglik_single(node.mean, node.m2, node.count, floor, x)


def collocation_logscore(node: ConceptNode, x: np.ndarray, floor: float) -> float:
    """Log collocation score: twice the log-likelihood, normalizer dropped."""
    return 2.0 * log_likelihood(node, x, floor)


def _path_to_root(frozen, idx: int) -> list[int]:
    path = []
    while idx >= 0:
        path.append(int(frozen.node_ids[idx]))
        idx = int(frozen.parent_idx[idx])
    path.reverse()
    return path


def _as_query(x, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape[0] != dim:
        raise ValidationError(f"query dim {x.shape[0]} != index dim {dim}")
    return x


def retrieve_bfs(tree: CobwebTree, x: np.ndarray, budget: QueryBudget) -> RankedResult:
    """Greedy best-first search; leaves are ranked in exploration order.

    Every pop counts as one expansion. The search stops when ``budget.k``
    leaves have been emitted, ``budget.n_max`` nodes have been popped, or the
    queue empties.
    """
    if tree.root is None:
        return RankedResult([], "bfs", {})
    f = tree.frozen
    x = _as_query(x, tree.dim)

    def score_of(rows: np.ndarray) -> np.ndarray:
        return 2.0 * kernels.loglik_frozen_subset(
            f.means, f.inv_var, f.log_const, x, rows
        )

    root_score = float(score_of(np.array([0], dtype=np.int64))[0])
    heap: list[tuple[float, int, int]] = [(-root_score, int(f.node_ids[0]), 0)]
    entries: list[tuple[str, float]] = []
    paths: dict[str, list[int]] = {}
    pops = 0
    while heap and pops < budget.n_max and len(entries) < budget.k:
        neg_score, _, idx = heapq.heappop(heap)
        pops += 1
        if f.is_leaf[idx]:
            doc = f.leaf_doc[idx]
            entries.append((doc, -neg_score))
            paths[doc] = _path_to_root(f, idx)
        else:
            kids = f.children_idx[f.children_ptr[idx]:f.children_ptr[idx + 1]]
            for kid_idx, s in zip(kids, score_of(kids)):
                heapq.heappush(heap, (-float(s), int(f.node_ids[kid_idx]), int(kid_idx)))
    return RankedResult(entries, "bfs", paths)


def retrieve_pathsum(tree: CobwebTree, x: np.ndarray, k: int,
                     include_leaf_score: bool = False,
                     depth_normalize: bool = False) -> RankedResult:
    """Rank leaves by the summed collocation scores along their paths.

    The sum covers the internal nodes from the root down to the leaf's
    parent; ``include_leaf_score`` adds the leaf's own score and
    ``depth_normalize`` divides by the number of summed terms (both off by
    default, matching the plain path-sum definition).
    """
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    if tree.root is None:
        return RankedResult([], "pathsum", {})
    f = tree.frozen
    x = _as_query(x, tree.dim)

    scores = 2.0 * kernels.loglik_frozen(f.means, f.inv_var, f.log_const, x)

    # Sum each node's internal-ancestor scores with one vectorized gather
    # per depth level (parents always sit at a shallower level).
    n = len(scores)
    summed = np.where(f.is_leaf, 0.0, scores)
    if include_leaf_score:
        summed = scores.copy()
    cum = np.zeros(n)
    terms = np.zeros(n, dtype=np.int64)
    counted = (~f.is_leaf) | include_leaf_score
    for rows in f.depth_slices:
        parents = f.parent_idx[rows]
        has_parent = parents >= 0
        cum[rows] = summed[rows] + np.where(has_parent, cum[parents], 0.0)
        terms[rows] = counted[rows] + np.where(has_parent, terms[parents], 0)

    leaf_rows = f.leaf_rows
    leaf_scores = cum[leaf_rows]
    if depth_normalize:
        leaf_scores = leaf_scores / np.maximum(terms[leaf_rows], 1)

    top = _top_k_by_score(leaf_scores, f.node_ids[leaf_rows], k)
    entries = []
    paths = {}
    for j in top:
        idx = int(leaf_rows[j])
        doc = f.leaf_doc[idx]
        entries.append((doc, float(leaf_scores[j])))
        paths[doc] = _path_to_root(f, idx)
    return RankedResult(entries, "pathsum", paths)


def _top_k_by_score(scores: np.ndarray, tiebreak_ids: np.ndarray, k: int) -> list[int]:
    """Indices of the k best scores, ties broken by ascending id.

    Partial selection: only candidates at or above the k-th score are sorted.
    """
    n = len(scores)
    if n == 0:
        return []
    k = min(k, n)
    if k == n:
        cand = np.arange(n)
    else:
        part = np.argpartition(-scores, k - 1)
        kth = scores[part[k - 1]]
        cand = np.nonzero(scores >= kth)[0]
    order = cand[np.lexsort((tiebreak_ids[cand], -scores[cand]))]
    return [int(i) for i in order[:k]]


def retrieve_dot(corpus: EmbeddingMatrix, x: np.ndarray, k: int) -> RankedResult:
    """Exact inner-product top-k over all corpus rows; ties by row order."""
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    if corpus.count == 0:
        return RankedResult([], "dot")
    x = _as_query(x, corpus.dim)
    scores = corpus.data64 @ x
    n = len(scores)
    kk = min(k, n)
    if kk == n:
        cand = np.arange(n)
    else:
        part = np.argpartition(-scores, kk - 1)
        kth = scores[part[kk - 1]]
        cand = np.nonzero(scores >= kth)[0]
    order = cand[np.lexsort((cand, -scores[cand]))][:kk]
    entries = [(corpus.ids[i], float(scores[i])) for i in order]
    return RankedResult(entries, "dot")
