"""Incremental prototype tree with diagonal-Gaussian concept nodes.

Each node summarizes the instances beneath it with per-dimension (mean, m2)
statistics; variance is ``m2 / count + variance_floor``. Raw vectors are held
only at leaves, one document per leaf. Insertion descends from the root and at
each internal node picks among four structural operators (add to best child,
create new child, merge the two best children, split the best child) by the
mean category utility of the resulting partition.

Construction is strictly sequential. After :meth:`CobwebTree.freeze` the tree
is immutable and its statistics are flattened into contiguous arrays for the
retrieval operations.
"""

from __future__ import annotations

import json
import math
import struct
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from protosearch import kernels
from protosearch.io import FormatError, ValidationError
from protosearch.kernels import TWO_PI_E

TREE_MAGIC = b"CWTR"
TREE_VERSION = 1

DEFAULT_VARIANCE_FLOOR = 1e-3

# Operator precedence when scores tie within this epsilon: the earlier
# operator in (add, new, merge, split) wins.
TIE_EPS = 1e-12

OP_ADD = "add"
OP_NEW = "new"
OP_MERGE = "merge"
OP_SPLIT = "split"


class ConceptNode:
    """One concept: count, per-dimension mean and sum of squared deviations."""

    __slots__ = ("node_id", "count", "mean", "m2", "children", "parent", "leaf_doc")

    def __init__(self, node_id: int, dim: int, parent: int | None = None):
        self.node_id = node_id
        self.count = 0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)
        self.children: list[int] = []
        self.parent = parent
        self.leaf_doc: str | None = None

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def variance(self, floor: float) -> np.ndarray:
        return self.m2 / self.count + floor

    def __repr__(self) -> str:
        kind = f"leaf {self.leaf_doc!r}" if self.is_leaf else f"{len(self.children)} children"
        return f"ConceptNode(id={self.node_id}, count={self.count}, {kind})"


def node_entropy(node: ConceptNode, floor: float) -> float:
    """Differential entropy of the node's diagonal Gaussian."""
    return kernels.entropy_single(node.m2, node.count, floor)


def category_utility(parent: ConceptNode, child: ConceptNode, floor: float) -> float:
    """P(child | parent) times the parent-to-child entropy drop.

    The partition score of an operator candidate is the mean of this
    quantity over the candidate's children.
    """
    p = child.count / parent.count
    return p * (node_entropy(parent, floor) - node_entropy(child, floor))


def update_stats(node: ConceptNode, x: np.ndarray) -> None:
    """Welford update of (count, mean, m2) with one new vector."""
    node.count += 1
    delta = x - node.mean
    node.mean = node.mean + delta / node.count
    node.m2 = node.m2 + delta * (x - node.mean)


def _merged_stats(a: ConceptNode, b: ConceptNode):
    """Batch-merge two nodes' statistics (count, mean, m2)."""
    n = a.count + b.count
    delta = b.mean - a.mean
    mean = a.mean + delta * (b.count / n)
    m2 = a.m2 + b.m2 + delta * delta * (a.count * b.count / n)
    return n, mean, m2


@dataclass
class ChildSnapshot:
    """Pre-decision view of one child, for decision tracing."""
    node_id: int
    count: int
    docs: list[str]
    child_groups: list[list[str]] | None  # per-grandchild docs; None for leaves


@dataclass
class DecisionRecord:
    """One operator decision captured during insertion."""
    node_id: int
    is_root: bool
    incoming_doc: str
    chosen: str
    scores: dict[str, float]
    children: list[ChildSnapshot]


@dataclass
class _Frozen:
    """Flattened node statistics in root-first topological order."""
    node_ids: np.ndarray        # arena ids, topo order
    index_of: dict[int, int]
    parent_idx: np.ndarray      # -1 for root
    is_leaf: np.ndarray
    counts: np.ndarray
    means: np.ndarray           # (N0, D)
    inv_var: np.ndarray         # (N0, D)
    log_const: np.ndarray       # sum log(2 pi var) per node
    children_ptr: np.ndarray    # CSR offsets into children_idx
    children_idx: np.ndarray
    leaf_doc: list[str | None]
    leaf_rows: np.ndarray       # topo indices of leaves, insertion order
    depth_slices: list[np.ndarray]  # topo indices grouped by depth, root first


class CobwebTree:
    """Arena-backed concept hierarchy built by incremental insertion."""

    def __init__(self, dim: int, variance_floor: float = DEFAULT_VARIANCE_FLOOR):
        if variance_floor <= 0:
            raise ValidationError("variance_floor must be positive")
        self.dim = dim
        self.variance_floor = float(variance_floor)
        self.nodes: dict[int, ConceptNode] = {}
        self.root: int | None = None
        self.doc_vectors: dict[str, np.ndarray] = {}
        self._doc_leaf: dict[str, int] = {}
        self._next_id = 0
        self._frozen: _Frozen | None = None

    # -- basic access --------------------------------------------------

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    @property
    def leaf_count(self) -> int:
        return len(self._doc_leaf)

    def node(self, node_id: int) -> ConceptNode:
        return self.nodes[node_id]

    def leaf_of(self, doc_id: str) -> int:
        return self._doc_leaf[doc_id]

    def doc_ids(self) -> list[str]:
        """Document ids in insertion order."""
        return sorted(self._doc_leaf, key=self._doc_leaf.__getitem__)

    def _new_node(self, parent: int | None) -> ConceptNode:
        node = ConceptNode(self._next_id, self.dim, parent)
        self.nodes[node.node_id] = node
        self._next_id += 1
        return node

    # -- insertion -----------------------------------------------------

    def insert(self, doc_id: str, x: np.ndarray,
               trace: list[DecisionRecord] | None = None) -> int:
        """Insert one document vector; returns the new leaf's node id."""
        if self._frozen is not None:
            raise ValidationError("tree is frozen; no further inserts")
        if doc_id in self._doc_leaf:
            raise ValidationError(f"duplicate doc_id {doc_id!r}")
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.dim,):
            raise ValidationError(f"expected shape ({self.dim},), got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValidationError("non-finite vector")

        self.doc_vectors[doc_id] = x.copy()

        if self.root is None:
            leaf = self._new_leaf(doc_id, x, parent=None)
            self.root = leaf.node_id
            self._doc_leaf[doc_id] = leaf.node_id
            return leaf.node_id

        current = self.nodes[self.root]
        while True:
            if current.is_leaf:
                new_leaf = self._fringe_split(current, doc_id, x)
                break
            op, best1, best2 = self._decide(current, doc_id, x, trace)
            if op == OP_ADD:
                update_stats(current, x)
                current = self.nodes[best1]
            elif op == OP_NEW:
                update_stats(current, x)
                new_leaf = self._new_leaf(doc_id, x, parent=current.node_id)
                current.children.append(new_leaf.node_id)
                break
            elif op == OP_MERGE:
                update_stats(current, x)
                current = self._merge_children(current, best1, best2)
            else:  # split: promote best1's children and re-evaluate here
                self._split_child(current, best1)

        self._doc_leaf[doc_id] = new_leaf.node_id
        return new_leaf.node_id

    def _new_leaf(self, doc_id: str, x: np.ndarray, parent: int | None) -> ConceptNode:
        leaf = self._new_node(parent)
        leaf.count = 1
        leaf.mean = x.copy()
        leaf.leaf_doc = doc_id
        return leaf

    def _fringe_split(self, leaf: ConceptNode, doc_id: str, x: np.ndarray) -> ConceptNode:
        """Replace a leaf with an internal node over {old leaf, new leaf}."""
        parent_id = leaf.parent
        internal = self._new_node(parent_id)
        internal.count = leaf.count
        internal.mean = leaf.mean.copy()
        internal.m2 = leaf.m2.copy()
        update_stats(internal, x)
        if parent_id is None:
            self.root = internal.node_id
        else:
            siblings = self.nodes[parent_id].children
            siblings[siblings.index(leaf.node_id)] = internal.node_id
        leaf.parent = internal.node_id
        new_leaf = self._new_leaf(doc_id, x, parent=internal.node_id)
        internal.children = [leaf.node_id, new_leaf.node_id]
        return new_leaf

    def _merge_children(self, parent: ConceptNode, a_id: int, b_id: int) -> ConceptNode:
        a, b = self.nodes[a_id], self.nodes[b_id]
        merged = self._new_node(parent.node_id)
        merged.count, merged.mean, merged.m2 = _merged_stats(a, b)
        merged.children = [a_id, b_id]
        a.parent = merged.node_id
        b.parent = merged.node_id
        kept = [c for c in parent.children if c not in (a_id, b_id)]
        parent.children = kept + [merged.node_id]
        return merged

    def _split_child(self, parent: ConceptNode, child_id: int) -> None:
        child = self.nodes[child_id]
        idx = parent.children.index(child_id)
        promoted = list(child.children)
        for g in promoted:
            self.nodes[g].parent = parent.node_id
        parent.children = (
            parent.children[:idx] + promoted + parent.children[idx + 1:]
        )
        del self.nodes[child_id]

    # -- operator scoring ------------------------------------------------

    def _decide(self, node: ConceptNode, doc_id: str, x: np.ndarray,
                trace: list[DecisionRecord] | None):
        """Score the four operator candidates at an internal node.

        Every candidate is scored against the parent statistics updated with
        the incoming point (the point ends up beneath this node regardless of
        the operator chosen); the children reflect the structural change. The
        split candidate's children are scored without the point, which is
        placed on re-evaluation.
        """
        floor = self.variance_floor
        children = [self.nodes[c] for c in node.children]
        b = len(children)

        counts = np.array([c.count for c in children], dtype=np.float64)
        means = np.stack([c.mean for c in children])
        m2s = np.stack([c.m2 for c in children])

        # Parent with x absorbed.
        new_count = node.count + 1
        delta = x - node.mean
        new_mean = node.mean + delta / new_count
        new_m2 = node.m2 + delta * (x - new_mean)
        u_parent = kernels.entropy_single(new_m2, new_count, floor)

        u_children = kernels.entropy_rows(m2s, counts, floor)
        u_children_plus = kernels.entropy_rows_plus_point(means, m2s, counts, floor, x)

        # cu_terms[i] = P(child_i) * (U(parent') - U(child_i)) as-is.
        cu_asis = (counts / new_count) * (u_parent - u_children)
        cu_plus = ((counts + 1) / new_count) * (u_parent - u_children_plus)
        total_asis = float(cu_asis.sum())

        # (a) add x to the best child.
        add_scores = (total_asis - cu_asis + cu_plus) / b
        best_i = int(np.argmax(add_scores))
        score_add = float(add_scores[best_i])
        order = np.argsort(-add_scores, kind="stable")
        second_i = int(order[1]) if b > 1 else None

        # (b) new singleton child for x.
        u_single = 0.5 * self.dim * math.log(TWO_PI_E * floor)
        score_new = (total_asis + (1.0 / new_count) * (u_parent - u_single)) / (b + 1)

        scores = {OP_ADD: score_add, OP_NEW: float(score_new)}

        # (c) merge the two best children, then add x to the merged node.
        if b >= 3 and second_i is not None:
            a, c2 = children[best_i], children[second_i]
            m_count, m_mean, m_m2 = _merged_stats(a, c2)
            md = x - m_mean
            m_count += 1
            m_mean = m_mean + md / m_count
            m_m2 = m_m2 + md * (x - m_mean)
            u_merged = kernels.entropy_single(m_m2, m_count, floor)
            cu_merged = (m_count / new_count) * (u_parent - u_merged)
            rest = total_asis - float(cu_asis[best_i]) - float(cu_asis[second_i])
            scores[OP_MERGE] = (rest + cu_merged) / (b - 1)

        # (d) split the best child, promoting its children.
        best_child = children[best_i]
        if not best_child.is_leaf:
            grand = [self.nodes[g] for g in best_child.children]
            g_counts = np.array([g.count for g in grand], dtype=np.float64)
            g_m2s = np.stack([g.m2 for g in grand])
            u_grand = kernels.entropy_rows(g_m2s, g_counts, floor)
            cu_grand = float(((g_counts / new_count) * (u_parent - u_grand)).sum())
            rest = total_asis - float(cu_asis[best_i])
            scores[OP_SPLIT] = (rest + cu_grand) / (b - 1 + len(grand))

        chosen = OP_ADD
        best_score = scores[OP_ADD]
        for op in (OP_NEW, OP_MERGE, OP_SPLIT):
            if op in scores and scores[op] > best_score + TIE_EPS:
                chosen = op
                best_score = scores[op]

        if trace is not None:
            trace.append(DecisionRecord(
                node_id=node.node_id,
                is_root=node.node_id == self.root,
                incoming_doc=doc_id,
                chosen=chosen,
                scores=dict(scores),
                children=[self._snapshot_child(c) for c in children],
            ))

        best1 = children[best_i].node_id
        best2 = children[second_i].node_id if second_i is not None else None
        return chosen, best1, best2

    def _snapshot_child(self, child: ConceptNode) -> ChildSnapshot:
        groups = None
        if not child.is_leaf:
            groups = [self._docs_under(g) for g in child.children]
        return ChildSnapshot(
            node_id=child.node_id,
            count=child.count,
            docs=self._docs_under(child.node_id),
            child_groups=groups,
        )

    def _docs_under(self, node_id: int) -> list[str]:
        out = []
        stack = [node_id]
        while stack:
            n = self.nodes[stack.pop()]
            if n.is_leaf:
                out.append(n.leaf_doc)
            else:
                stack.extend(reversed(n.children))
        return out

    # -- freezing --------------------------------------------------------

    def freeze(self) -> None:
        """Flatten statistics for retrieval; the tree becomes immutable."""
        if self._frozen is not None:
            return
        order: list[int] = []
        if self.root is not None:
            queue = deque([self.root])
            while queue:
                nid = queue.popleft()
                order.append(nid)
                queue.extend(self.nodes[nid].children)
        n = len(order)
        index_of = {nid: i for i, nid in enumerate(order)}
        d = self.dim
        means = np.zeros((n, d))
        variances = np.zeros((n, d))
        counts = np.zeros(n)
        parent_idx = np.full(n, -1, dtype=np.int64)
        is_leaf = np.zeros(n, dtype=bool)
        leaf_doc: list[str | None] = [None] * n
        ptr = np.zeros(n + 1, dtype=np.int64)
        child_lists = []
        for i, nid in enumerate(order):
            node = self.nodes[nid]
            means[i] = node.mean
            variances[i] = node.variance(self.variance_floor)
            counts[i] = node.count
            if node.parent is not None:
                parent_idx[i] = index_of[node.parent]
            is_leaf[i] = node.is_leaf
            leaf_doc[i] = node.leaf_doc
            kids = [index_of[c] for c in node.children]
            child_lists.append(kids)
            ptr[i + 1] = ptr[i] + len(kids)
        children_idx = np.array(
            [c for kids in child_lists for c in kids], dtype=np.int64
        )
        inv_var = 1.0 / variances if n else variances
        log_const = (
            np.sum(np.log(2.0 * np.pi * variances), axis=1) if n else np.zeros(0)
        )
        depth = np.zeros(n, dtype=np.int64)
        for i in range(1, n):
            depth[i] = depth[parent_idx[i]] + 1
        depth_slices = [
            np.nonzero(depth == lvl)[0] for lvl in range(int(depth.max()) + 1)
        ] if n else []
        leaf_topo = [index_of[self._doc_leaf[doc]] for doc in self.doc_ids()]
        self._frozen = _Frozen(
            node_ids=np.array(order, dtype=np.int64),
            index_of=index_of,
            parent_idx=parent_idx,
            is_leaf=is_leaf,
            counts=counts,
            means=means,
            inv_var=inv_var,
            log_const=log_const,
            children_ptr=ptr,
            children_idx=children_idx,
            leaf_doc=leaf_doc,
            leaf_rows=np.array(leaf_topo, dtype=np.int64),
            depth_slices=depth_slices,
        )

    @property
    def frozen(self) -> _Frozen:
        if self._frozen is None:
            raise ValidationError("tree must be frozen before retrieval")
        return self._frozen

    @property
    def is_frozen(self) -> bool:
        return self._frozen is not None

    # -- export ------------------------------------------------------------

    def depth_of(self, node_id: int) -> int:
        depth = 0
        node = self.nodes[node_id]
        while node.parent is not None:
            node = self.nodes[node.parent]
            depth += 1
        return depth


def export_tree(tree: CobwebTree, docs=None, fmt: str = "json",
                max_depth: int | None = None) -> bytes:
    """Serialize the hierarchy for inspection as JSON or Graphviz DOT.

    Leaf text from ``docs`` is truncated to 80 characters; unknown doc ids
    render with the id only.
    """
    if fmt not in ("json", "dot"):
        raise ValidationError(f"unknown export format {fmt!r}")

    def leaf_text(doc_id):
        if docs is None or doc_id is None:
            return None
        text = docs.get(doc_id)
        return None if text is None else text[:80]

    if fmt == "json":
        def build(node_id, depth):
            node = tree.nodes[node_id]
            obj = {"id": node.node_id, "count": node.count, "depth": depth}
            if node.is_leaf:
                obj["doc_id"] = node.leaf_doc
                text = leaf_text(node.leaf_doc)
                if text is not None:
                    obj["text"] = text
            obj["children"] = (
                []
                if max_depth is not None and depth >= max_depth
                else [build(c, depth + 1) for c in node.children]
            )
            return obj

        payload = {} if tree.root is None else build(tree.root, 0)
        return (json.dumps(payload, indent=2) + "\n").encode("utf-8")

    lines = ["digraph concepts {", "  node [shape=box];"]
    if tree.root is not None:
        stack = [(tree.root, 0)]
        while stack:
            nid, depth = stack.pop()
            node = tree.nodes[nid]
            if node.is_leaf:
                label = f"{node.node_id}: {node.leaf_doc}"
                text = leaf_text(node.leaf_doc)
                if text is not None:
                    label += "\\n" + text.replace('"', "'")
            else:
                label = f"{node.node_id} (n={node.count})"
            lines.append(f'  n{nid} [label="{label}"];')
            if max_depth is None or depth < max_depth:
                for c in reversed(node.children):
                    lines.append(f"  n{nid} -> n{c};")
                    stack.append((c, depth + 1))
    lines.append("}")
    return ("\n".join(lines) + "\n").encode("utf-8")


def save_tree(tree: CobwebTree, path) -> None:
    """Persist a tree as the CWTR binary snapshot."""
    with open(path, "wb") as fh:
        fh.write(TREE_MAGIC)
        root = tree.root if tree.root is not None else 2**64 - 1
        fh.write(struct.pack("<IIdQQ", TREE_VERSION, tree.dim,
                             tree.variance_floor, len(tree.nodes), root))
        for nid in sorted(tree.nodes):
            node = tree.nodes[nid]
            parent = node.parent if node.parent is not None else -1
            doc = node.leaf_doc.encode("utf-8") if node.leaf_doc is not None else b""
            fh.write(struct.pack("<QqQBI", nid, parent, node.count,
                                 1 if node.is_leaf else 0, len(node.children)))
            if node.children:
                fh.write(np.array(node.children, dtype="<u8").tobytes())
            fh.write(struct.pack("<I", len(doc)))
            fh.write(doc)
            fh.write(np.ascontiguousarray(node.mean, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(node.m2, dtype="<f8").tobytes())


def load_tree(path) -> CobwebTree:
    """Load a CWTR snapshot; the returned tree is frozen and queryable."""
    raw = Path(path).read_bytes()
    if raw[:4] != TREE_MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}")
    version, dim, floor, n_nodes, root = struct.unpack_from("<IIdQQ", raw, 4)
    if version != TREE_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    offset = 4 + struct.calcsize("<IIdQQ")
    tree = CobwebTree(dim, variance_floor=floor)
    max_id = -1
    for _ in range(n_nodes):
        nid, parent, count, leaf_flag, n_children = struct.unpack_from(
            "<QqQBI", raw, offset
        )
        offset += struct.calcsize("<QqQBI")
        children = np.frombuffer(raw, dtype="<u8", count=n_children, offset=offset)
        offset += n_children * 8
        (doc_len,) = struct.unpack_from("<I", raw, offset)
        offset += 4
        doc = raw[offset:offset + doc_len].decode("utf-8") if doc_len else None
        offset += doc_len
        mean = np.frombuffer(raw, dtype="<f8", count=dim, offset=offset).copy()
        offset += dim * 8
        m2 = np.frombuffer(raw, dtype="<f8", count=dim, offset=offset).copy()
        offset += dim * 8
        node = ConceptNode(nid, dim, parent if parent >= 0 else None)
        node.count = count
        node.mean = mean
        node.m2 = m2
        node.children = [int(c) for c in children]
        if leaf_flag:
            node.leaf_doc = doc
            tree._doc_leaf[doc] = nid
            tree.doc_vectors[doc] = mean.copy()
        tree.nodes[nid] = node
        max_id = max(max_id, nid)
    tree.root = None if root == 2**64 - 1 else root
    tree._next_id = max_id + 1
    tree.freeze()
    return tree
