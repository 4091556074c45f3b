"""Writers for the protosearch interchange formats.

Embedding files: magic ``CWEB``, version u32=1, count u64, dim u32, dtype
u8=0 (float32), payload row-major float32, all little-endian; ids in a
sibling ``<path>.ids`` file, one per line, LF-terminated. Text corpora are
``id<TAB>text`` TSVs with tab/newline/backslash escaped as ``\\t``/``\\n``/
``\\\\``. Writes are atomic (temp file + rename).
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

MAGIC = b"CWEB"
VERSION = 1
_HEADER = struct.Struct("<4sIQIB")


def _atomic_write(path: Path, payload: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_embedding_file(data: np.ndarray, ids: list[str], path) -> None:
    """Write vectors plus the id sidecar; rejects invalid inputs."""
    data = np.ascontiguousarray(data, dtype="<f4")
    if data.ndim != 2:
        raise ValueError(f"expected 2-d data, got shape {data.shape}")
    if len(ids) != data.shape[0]:
        raise ValueError(f"{len(ids)} ids for {data.shape[0]} rows")
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate ids")
    if data.size and not np.all(np.isfinite(data)):
        raise ValueError("non-finite embedding values")
    path = Path(path)
    header = _HEADER.pack(MAGIC, VERSION, data.shape[0], data.shape[1], 0)
    _atomic_write(path, header + data.tobytes(order="C"))
    _atomic_write(
        Path(str(path) + ".ids"),
        b"".join(i.encode("utf-8") + b"\n" for i in ids),
    )


def escape_text(text: str) -> str:
    return text.replace("\\", "\\\\").replace("\t", "\\t").replace("\n", "\\n")


def unescape_text(text: str) -> str:
    out, i = [], 0
    while i < len(text):
        ch = text[i]
        if ch == "\\" and i + 1 < len(text):
            nxt = text[i + 1]
            if nxt in ("t", "n", "\\"):
                out.append({"t": "\t", "n": "\n", "\\": "\\"}[nxt])
                i += 2
                continue
        out.append(ch)
        i += 1
    return "".join(out)


def read_text_tsv(path) -> list[tuple[str, str]]:
    """Parse an ``id<TAB>text`` TSV, preserving order."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t", 1)
            if len(parts) != 2:
                raise ValueError(f"{path}: line {lineno}: expected id<TAB>text")
            rows.append((parts[0], unescape_text(parts[1])))
    return rows


def write_text_tsv(rows: list[tuple[str, str]], path) -> None:
    payload = "".join(f"{id_}\t{escape_text(text)}\n" for id_, text in rows)
    _atomic_write(Path(path), payload.encode("utf-8"))


def write_qrels_tsv(entries: list[tuple[str, str, int]], path) -> None:
    payload = "".join(f"{q}\t{d}\t{r}\n" for q, d, r in entries)
    _atomic_write(Path(path), payload.encode("utf-8"))
