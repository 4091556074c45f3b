"""Independent reference implementations used to check the package.

Everything here recomputes results from raw data with plain formulas and
full sorts, deliberately avoiding the package's numeric code paths.
"""

from __future__ import annotations

import math

import numpy as np


def batch_stats(vectors):
    """(count, mean, m2) of a list of vectors, computed by plain numpy."""
    arr = np.asarray(vectors, dtype=np.float64)
    n = arr.shape[0]
    mean = arr.mean(axis=0)
    m2 = ((arr - mean) ** 2).sum(axis=0)
    return n, mean, m2


def entropy(m2, count, floor):
    """Diagonal-Gaussian differential entropy from (m2, count)."""
    var = np.asarray(m2, dtype=np.float64) / count + floor
    return sum(0.5 * math.log(2.0 * math.pi * math.e * v) for v in var)


def loglik(mean, m2, count, floor, x):
    var = np.asarray(m2, dtype=np.float64) / count + floor
    total = 0.0
    for j in range(len(var)):
        diff = x[j] - mean[j]
        total += math.log(2.0 * math.pi * var[j]) + diff * diff / var[j]
    return -0.5 * total


def partition_mean_cu(parent_vectors, groups, floor):
    """Mean category utility of a partition given raw vectors per group.

    ``parent_vectors`` is the full list of vectors at the parent (including
    any incoming point); each group is a list of vectors forming one child.
    """
    pn, _, pm2 = batch_stats(parent_vectors)
    u_parent = entropy(pm2, pn, floor)
    total = 0.0
    for group in groups:
        gn, _, gm2 = batch_stats(group)
        u_child = entropy(gm2, gn, floor)
        total += (gn / pn) * (u_parent - u_child)
    return total / len(groups)


def candidate_scores(child_docs, child_groups, vectors, x, floor):
    """Re-score the four operator candidates at a node, independently.

    ``child_docs``: per child, the doc ids beneath it (pre-decision).
    ``child_groups``: per child, doc ids per grandchild, or None for leaves.
    ``vectors``: doc id -> raw vector. ``x``: the incoming vector.

    Returns a dict of candidate name -> mean-CU score, with the same
    candidate-validity rules as the tree (merge needs >= 3 children, split
    needs an internal best child) and the parent scored with x included.
    """
    groups = [[vectors[d] for d in docs] for docs in child_docs]
    parent_vectors = [v for g in groups for v in g] + [x]

    add_scores = []
    for i in range(len(groups)):
        candidate = [g + [x] if j == i else g for j, g in enumerate(groups)]
        add_scores.append(partition_mean_cu(parent_vectors, candidate, floor))
    best = int(np.argmax(add_scores))
    order = sorted(range(len(groups)), key=lambda i: (-add_scores[i], i))
    second = order[1] if len(order) > 1 else None

    scores = {
        "add": add_scores[best],
        "new": partition_mean_cu(parent_vectors, groups + [[x]], floor),
    }
    if len(groups) >= 3 and second is not None:
        merged = groups[best] + groups[second] + [x]
        rest = [g for i, g in enumerate(groups) if i not in (best, second)]
        scores["merge"] = partition_mean_cu(parent_vectors, rest + [merged], floor)
    if child_groups[best] is not None:
        promoted = [[vectors[d] for d in docs] for docs in child_groups[best]]
        rest = [g for i, g in enumerate(groups) if i != best]
        scores["split"] = partition_mean_cu(parent_vectors, rest + promoted, floor)
    return scores


def enumerate_paths(tree):
    """doc id -> list of node ids from the root down to the leaf."""
    paths = {}
    for doc in tree.doc_ids():
        node = tree.node(tree.leaf_of(doc))
        chain = [node.node_id]
        while node.parent is not None:
            node = tree.node(node.parent)
            chain.append(node.node_id)
        paths[doc] = chain[::-1]
    return paths


def pathsum_ranking(tree, x, include_leaf_score=False):
    """Rank all leaves by explicitly enumerated path-score sums."""
    floor = tree.variance_floor
    scored = []
    for doc, path in enumerate_paths(tree).items():
        total = 0.0
        for nid in path:
            node = tree.node(nid)
            if node.is_leaf and not include_leaf_score:
                continue
            total += 2.0 * loglik(node.mean, node.m2, node.count, floor, x)
        scored.append((doc, total, tree.leaf_of(doc)))
    scored.sort(key=lambda t: (-t[1], t[2]))
    return [(doc, score) for doc, score, _ in scored]


def dot_ranking(matrix, x):
    """Full-sort exact inner-product ranking, ties by row order."""
    scores = [float(np.dot(row, x)) for row in matrix.data64]
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return [(matrix.ids[i], scores[i]) for i in order]


def recall(ranked_docs, relevant, k):
    return len(set(ranked_docs[:k]) & relevant) / len(relevant)


def mrr(ranked_docs, relevant, k):
    for rank, doc in enumerate(ranked_docs[:k], start=1):
        if doc in relevant:
            return 1.0 / rank
    return 0.0


def ndcg(ranked_docs, grades, k):
    dcg = 0.0
    for rank, doc in enumerate(ranked_docs[:k], start=1):
        dcg += grades.get(doc, 0) / math.log2(rank + 1)
    ideal = sorted((g for g in grades.values() if g > 0), reverse=True)
    idcg = sum(g / math.log2(r + 1) for r, g in enumerate(ideal[:k], start=1))
    return dcg / idcg
