"""Binary embedding files, id sidecars, qrels, and document text stores.

Embedding file layout (little-endian):

    magic   4 bytes  b"CWEB"
    version u32      1
    count   u64      number of rows
    dim     u32      embedding dimension
    dtype   u8       0 = float32
    payload count * dim float32, row-major

Row identifiers live in a sibling text file at ``<path>.ids``: UTF-8, one id
per line, LF-terminated, same order as the rows.

Qrels are TSV lines ``query_id<TAB>doc_id<TAB>relevance`` with no header.
Document stores are TSV lines ``doc_id<TAB>text`` with tabs/newlines in the
text escaped as ``\\t`` / ``\\n`` (and backslash as ``\\\\``).
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"CWEB"
FORMAT_VERSION = 1
DTYPE_F32 = 0
_HEADER = struct.Struct("<4sIQIB")  # magic, version, count, dim, dtype


class FormatError(ValueError):
    """A file does not conform to the expected on-disk layout."""


class ValidationError(ValueError):
    """Data violates an invariant (duplicates, non-finite values, shapes)."""


class EmbeddingMatrix:
    """Dense float32 vectors with aligned string identifiers.

    Immutable after construction; safe for concurrent readers.
    """

    def __init__(self, data: np.ndarray, ids: list[str]):
        data = np.ascontiguousarray(data, dtype=np.float32)
        if data.ndim != 2:
            raise ValidationError(f"expected 2-d data, got shape {data.shape}")
        if data.shape[1] < 1:
            raise ValidationError("embedding dimension must be positive")
        if len(ids) != data.shape[0]:
            raise ValidationError(
                f"{len(ids)} ids for {data.shape[0]} rows"
            )
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate ids")
        if data.size and not np.all(np.isfinite(data)):
            raise ValidationError("non-finite values in embedding data")
        self.data = data
        self.ids = list(ids)
        self._data64: np.ndarray | None = None
        self._row_of: dict[str, int] | None = None

    @property
    def count(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    @property
    def data64(self) -> np.ndarray:
        """Float64 view of the data, cached on first use (read-only)."""
        if self._data64 is None:
            d = self.data.astype(np.float64)
            d.setflags(write=False)
            self._data64 = d
        return self._data64

    def row(self, id_: str) -> np.ndarray:
        """Return the float64 row for one id."""
        if self._row_of is None:
            self._row_of = {s: i for i, s in enumerate(self.ids)}
        return self.data64[self._row_of[id_]]

    def __eq__(self, other) -> bool:
        if not isinstance(other, EmbeddingMatrix):
            return NotImplemented
        return (
            self.ids == other.ids
            and self.data.shape == other.data.shape
            and np.array_equal(
                self.data.view(np.uint32), other.data.view(np.uint32)
            )
        )

    def __repr__(self) -> str:
        return f"EmbeddingMatrix(count={self.count}, dim={self.dim})"


def _ids_path(path) -> Path:
    return Path(str(path) + ".ids")


def write_embeddings(matrix: EmbeddingMatrix, path) -> None:
    """Write a matrix in the binary format plus its ``.ids`` sidecar.

    Byte-for-byte deterministic for identical input.
    """
    if matrix.data.size and not np.all(np.isfinite(matrix.data)):
        raise ValidationError("non-finite values in embedding data")
    path = Path(path)
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, matrix.count, matrix.dim, DTYPE_F32)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(matrix.data.tobytes(order="C"))
    with open(_ids_path(path), "wb") as fh:
        for id_ in matrix.ids:
            fh.write(id_.encode("utf-8") + b"\n")


def read_embeddings(path) -> EmbeddingMatrix:
    """Load and validate a matrix written by :func:`write_embeddings`."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: file shorter than header")
    magic, version, count, dim, dtype = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if dtype != DTYPE_F32:
        raise FormatError(f"{path}: unsupported dtype code {dtype}")
    if dim < 1:
        raise FormatError(f"{path}: non-positive dim {dim}")
    payload = raw[_HEADER.size:]
    expected = count * dim * 4
    if len(payload) != expected:
        raise FormatError(
            f"{path}: payload is {len(payload)} bytes, expected {expected}"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(count, dim)

    ids_file = _ids_path(path)
    if not ids_file.exists():
        raise FormatError(f"missing ids sidecar {ids_file}")
    text = ids_file.read_bytes().decode("utf-8")
    if text.endswith("\n"):
        text = text[:-1]
    ids = text.split("\n") if text else []
    if len(ids) != count:
        raise FormatError(
            f"{ids_file}: {len(ids)} ids for {count} rows"
        )
    return EmbeddingMatrix(data, ids)


class Qrels:
    """Graded relevance judgments: (query_id, doc_id) -> relevance grade."""

    def __init__(self, entries: dict[tuple[str, str], int]):
        by_query: dict[str, dict[str, int]] = {}
        for (qid, did), rel in entries.items():
            if rel < 0:
                raise ValidationError(f"negative relevance for ({qid}, {did})")
            by_query.setdefault(qid, {})[did] = rel
        for qid, grades in by_query.items():
            if not any(rel >= 1 for rel in grades.values()):
                raise ValidationError(
                    f"query {qid!r} has no document with relevance >= 1"
                )
        self.entries = dict(entries)
        self._by_query = by_query

    @property
    def query_ids(self) -> list[str]:
        return list(self._by_query)

    def grades(self, query_id: str) -> dict[str, int]:
        """All judged docs for a query with their grades."""
        return dict(self._by_query.get(query_id, {}))

    def relevant_docs(self, query_id: str) -> set[str]:
        """Docs with relevance >= 1 for a query."""
        return {d for d, r in self._by_query.get(query_id, {}).items() if r >= 1}

    def __len__(self) -> int:
        return len(self.entries)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Qrels):
            return NotImplemented
        return self.entries == other.entries


def read_qrels(path) -> Qrels:
    """Parse a qrels TSV; duplicate (query, doc) pairs collapse to max grade."""
    entries: dict[tuple[str, str], int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise FormatError(
                    f"{path}: line {lineno}: expected 3 tab-separated fields"
                )
            qid, did, rel_str = parts
            try:
                rel = int(rel_str)
            except ValueError:
                raise FormatError(
                    f"{path}: line {lineno}: relevance {rel_str!r} is not an integer"
                ) from None
            if rel < 0:
                raise FormatError(
                    f"{path}: line {lineno}: negative relevance {rel}"
                )
            key = (qid, did)
            entries[key] = max(rel, entries.get(key, 0))
    return Qrels(entries)


def write_qrels(qrels: Qrels, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for (qid, did), rel in qrels.entries.items():
            fh.write(f"{qid}\t{did}\t{rel}\n")


def _escape_text(text: str) -> str:
    return text.replace("\\", "\\\\").replace("\t", "\\t").replace("\n", "\\n")


def _unescape_text(text: str) -> str:
    out = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "\\" and i + 1 < len(text):
            nxt = text[i + 1]
            if nxt == "t":
                out.append("\t")
                i += 2
                continue
            if nxt == "n":
                out.append("\n")
                i += 2
                continue
            if nxt == "\\":
                out.append("\\")
                i += 2
                continue
        out.append(ch)
        i += 1
    return "".join(out)


class DocStore:
    """Document texts keyed by doc_id."""

    def __init__(self, texts: dict[str, str]):
        self.texts = dict(texts)

    def get(self, doc_id: str) -> str | None:
        return self.texts.get(doc_id)

    def __len__(self) -> int:
        return len(self.texts)


def read_docstore(path) -> DocStore:
    """Parse a ``doc_id<TAB>text`` TSV with escaped tabs/newlines."""
    texts: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t", 1)
            if len(parts) != 2:
                raise FormatError(
                    f"{path}: line {lineno}: expected doc_id<TAB>text"
                )
            did, text = parts
            if did in texts:
                raise ValidationError(f"{path}: line {lineno}: duplicate doc_id {did!r}")
            texts[did] = _unescape_text(text)
    return DocStore(texts)


def write_docstore(store: DocStore, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for did, text in store.texts.items():
            fh.write(f"{did}\t{_escape_text(text)}\n")
