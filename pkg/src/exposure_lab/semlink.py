"""Embedding stores, clamped cosine similarity, and transition matrices.

The transition matrix keeps tag/entity pairs whose similarity lands in the
top quantile of *both* the name-based and description-based matrices, and
averages the two scores for surviving pairs. Quantile thresholds use the
nearest-rank rule over all entries (zeros included) with ties kept, so the
filter is deterministic and permutation-invariant.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import DataError

__all__ = [
    "EmbeddingStore",
    "CosineMatrix",
    "TransitionMatrix",
    "load_embedding_store",
    "write_embedding_store",
    "cosine_clamped",
    "joint_top_quantile_average",
    "hash_embeddings",
]

_MAGIC = b"EMB1"


@dataclass(frozen=True)
class EmbeddingStore:
    """Fixed-dimension vectors keyed by entity id."""

    dim: int
    entries: dict[str, np.ndarray]

    def __post_init__(self) -> None:
        if self.dim <= 0:
            raise DataError(f"embedding dimension must be positive, got {self.dim}")
        for entity_id, vec in self.entries.items():
            if vec.shape != (self.dim,):
                raise DataError(
                    f"vector for '{entity_id}' has length {vec.shape[0]}, "
                    f"expected {self.dim}"
                )
            if not np.all(np.isfinite(vec)):
                raise DataError(f"vector for '{entity_id}' contains NaN/Inf")
            if not np.any(vec):
                raise DataError(f"vector for '{entity_id}' is all zeros")

    def ids(self) -> tuple[str, ...]:
        return tuple(sorted(self.entries))

    def subset(self, ids: Iterable[str]) -> "EmbeddingStore":
        wanted = list(ids)
        missing = [i for i in wanted if i not in self.entries]
        if missing:
            raise DataError(
                "embedding store is missing entries: " + ", ".join(sorted(missing)[:10])
            )
        return EmbeddingStore(self.dim, {i: self.entries[i] for i in wanted})


def load_embedding_store(path: str | Path) -> EmbeddingStore:
    """Load a store from the EMB1 binary format or the CSV alternative.

    EMB1 layout: magic "EMB1", u32 dim (LE), u64 count (LE), then per record
    [u16 id byte length, UTF-8 id, dim little-endian f32]."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(4)
        if head == _MAGIC:
            return _load_binary(fh, path)
    return _load_csv(path)


def _load_binary(fh, path: Path) -> EmbeddingStore:
    header = fh.read(12)
    if len(header) != 12:
        raise DataError(f"{path}: truncated EMB1 header")
    dim, count = struct.unpack("<IQ", header)
    entries: dict[str, np.ndarray] = {}
    for _ in range(count):
        raw_len = fh.read(2)
        if len(raw_len) != 2:
            raise DataError(f"{path}: truncated EMB1 record")
        (id_len,) = struct.unpack("<H", raw_len)
        entity_id = fh.read(id_len).decode("utf-8")
        buf = fh.read(4 * dim)
        if len(buf) != 4 * dim:
            raise DataError(f"{path}: truncated vector for '{entity_id}'")
        if entity_id in entries:
            raise DataError(f"{path}: duplicate id '{entity_id}'")
        vec = np.frombuffer(buf, dtype="<f4").astype(np.float64)
        entries[entity_id] = vec
    if fh.read(1):
        raise DataError(f"{path}: trailing bytes after {count} records")
    return EmbeddingStore(dim, entries)


def _load_csv(path: Path) -> EmbeddingStore:
    entries: dict[str, np.ndarray] = {}
    dim: int | None = None
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split(",")
        if not header or header[0] != "id":
            raise DataError(f"{path}: not an EMB1 file and not an embedding CSV")
        dim = len(header) - 1
        for lineno, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").split(",")
            if len(parts) != dim + 1:
                raise DataError(f"{path}:{lineno}: expected {dim + 1} fields")
            entity_id = parts[0]
            if entity_id in entries:
                raise DataError(f"{path}:{lineno}: duplicate id '{entity_id}'")
            entries[entity_id] = np.array(
                [np.float32(x) for x in parts[1:]], dtype=np.float64
            )
    if dim is None or dim < 1:
        raise DataError(f"{path}: embedding CSV has no vector columns")
    return EmbeddingStore(dim, entries)


def write_embedding_store(store: EmbeddingStore, path: str | Path) -> None:
    """Write the EMB1 binary format; records ordered by id for determinism."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IQ", store.dim, len(store.entries)))
        for entity_id in sorted(store.entries):
            raw = entity_id.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(store.entries[entity_id].astype("<f4").tobytes())


@dataclass(frozen=True)
class CosineMatrix:
    """Dense clamped-cosine matrix with its id orderings."""

    row_ids: tuple[str, ...]
    col_ids: tuple[str, ...]
    values: np.ndarray  # shape (rows, cols), entries in [0, 1]


@dataclass(frozen=True)
class TransitionMatrix:
    """Sparse averaged similarity links surviving the joint quantile filter."""

    row_ids: tuple[str, ...]
    col_ids: tuple[str, ...]
    values: dict[tuple[str, str], float]

    def __post_init__(self) -> None:
        for key, v in self.values.items():
            if not 0.0 <= v <= 1.0:
                raise DataError(f"transition value {v} for {key} outside [0, 1]")

    def by_row(self) -> dict[str, dict[str, float]]:
        out: dict[str, dict[str, float]] = {r: {} for r in self.row_ids}
        for (r, c), v in sorted(self.values.items()):
            out[r][c] = v
        return out

    def get(self, row: str, col: str) -> float:
        return self.values.get((row, col), 0.0)


def cosine_clamped(
    store_a: EmbeddingStore,
    store_b: EmbeddingStore,
    row_ids: Iterable[str] | None = None,
    col_ids: Iterable[str] | None = None,
) -> CosineMatrix:
    """Pairwise max(0, cos) between two stores sharing a dimension.

    Norms are computed in a separate pass and vectors scaled to unit length
    before the dot products, which keeps the computation stable for vectors
    of very different magnitudes."""
    if store_a.dim != store_b.dim:
        raise DataError(
            f"dimension mismatch: {store_a.dim} vs {store_b.dim}"
        )
    rows = tuple(row_ids) if row_ids is not None else store_a.ids()
    cols = tuple(col_ids) if col_ids is not None else store_b.ids()
    a = _unit_rows(store_a, rows)
    b = _unit_rows(store_b, cols)
    sims = a @ b.T
    np.clip(sims, 0.0, 1.0, out=sims)
    return CosineMatrix(rows, cols, sims)


def _unit_rows(store: EmbeddingStore, ids: tuple[str, ...]) -> np.ndarray:
    mat = np.empty((len(ids), store.dim), dtype=np.float64)
    for i, entity_id in enumerate(ids):
        if entity_id not in store.entries:
            raise DataError(f"embedding store is missing '{entity_id}'")
        vec = store.entries[entity_id]
        norm = math.sqrt(float(np.dot(vec, vec)))
        if norm == 0.0:
            raise DataError(f"zero vector for '{entity_id}'")
        mat[i] = vec / norm
    return mat


def nearest_rank_threshold(values: np.ndarray, q: float) -> float:
    """Nearest-rank (1-q) quantile: the cut below the top-q mass, ties kept.

    rank = ceil((1-q) * n) in the ascending sort (1-based); q = 1 yields
    rank 0, i.e. no cut. A small epsilon guards ceil against float noise
    in (1-q) * n."""
    if not 0.0 < q <= 1.0:
        raise DataError(f"quantile q must be in (0, 1], got {q}")
    flat = np.sort(values, axis=None)
    rank = math.ceil((1.0 - q) * flat.size - 1e-9)
    if rank <= 0:
        return -math.inf
    return float(flat[rank - 1])


def joint_top_quantile_average(
    m_name: CosineMatrix, m_desc: CosineMatrix, q: float
) -> TransitionMatrix:
    """Average the two matrices over pairs in the top-q of both.

    With q = 1 every pair survives, reproducing the full-matrix variant."""
    if m_name.row_ids != m_desc.row_ids or m_name.col_ids != m_desc.col_ids:
        raise DataError("matrix id orderings differ")
    if m_name.values.shape != m_desc.values.shape:
        raise DataError(
            f"shape mismatch: {m_name.values.shape} vs {m_desc.values.shape}"
        )
    thr_name = nearest_rank_threshold(m_name.values, q)
    thr_desc = nearest_rank_threshold(m_desc.values, q)
    keep = (m_name.values >= thr_name) & (m_desc.values >= thr_desc)
    avg = (m_name.values + m_desc.values) / 2.0
    values = {
        (m_name.row_ids[r], m_name.col_ids[c]): float(avg[r, c])
        for r, c in zip(*np.nonzero(keep))
    }
    return TransitionMatrix(m_name.row_ids, m_name.col_ids, values)


def hash_embeddings(
    texts: Mapping[str, str], dim: int = 64, seed: int = 0
) -> EmbeddingStore:
    """Deterministic stand-in embedder: seeded character n-gram hashing.

    Each text's 3-grams (padded) are hashed into ``dim`` signed buckets and
    the result normalized to unit length. Identical text maps to an
    identical vector across processes, so pipelines built on it are
    bit-reproducible without any model."""
    if dim < 8:
        raise DataError(f"hash embedding dim must be >= 8, got {dim}")
    seed_key = seed.to_bytes(8, "little", signed=True)
    entries: dict[str, np.ndarray] = {}
    for entity_id, text in texts.items():
        if not text:
            raise DataError(f"empty text for '{entity_id}'")
        vec = np.zeros(dim, dtype=np.float64)
        padded = f"^^{text.casefold()}$$"
        for i in range(len(padded) - 2):
            gram = padded[i : i + 3].encode("utf-8")
            digest = hashlib.blake2b(gram, key=seed_key, digest_size=8).digest()
            value = int.from_bytes(digest, "little")
            bucket = value % dim
            sign = 1.0 if (value >> 63) & 1 else -1.0
            vec[bucket] += sign
        norm = math.sqrt(float(np.dot(vec, vec)))
        if norm == 0.0:
            # all n-gram signs cancelled; offset one bucket deterministically
            vec[0] = 1.0
            norm = 1.0
        entries[entity_id] = vec / norm
    return EmbeddingStore(dim, entries)


def write_transition(matrix: TransitionMatrix, path: str | Path) -> int:
    """Dump kept links as row_id,col_id,value (9 significant digits)."""
    rows = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("row_id,col_id,value\n")
        fh.write(f"#rows={len(matrix.row_ids)};cols={len(matrix.col_ids)}\n")
        for (r, c) in sorted(matrix.values):
            fh.write(f"{r},{c},{matrix.values[(r, c)]:.9g}\n")
            rows += 1
    return rows


def read_transition(path: str | Path) -> TransitionMatrix:
    """Inverse of :func:`write_transition`.

    Row/col id sets are reconstructed from the link list plus the header
    counts; identity of all-zero rows is preserved via the sidecar ids file
    when present."""
    values: dict[tuple[str, str], float] = {}
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "row_id,col_id,value":
            raise DataError(f"{path}: unexpected transition header '{header}'")
        counts = fh.readline()
        if not counts.startswith("#rows="):
            raise DataError(f"{path}: missing transition size line")
        for line in fh:
            r, c, v = line.rstrip("\n").split(",")
            values[(r, c)] = float(v)
    ids_path = Path(str(path) + ".ids")
    if ids_path.exists():
        blob = ids_path.read_text(encoding="utf-8").splitlines()
        marker = blob.index("--cols--")
        row_ids = tuple(blob[:marker])
        col_ids = tuple(blob[marker + 1 :])
    else:
        row_ids = tuple(sorted({r for r, _ in values}))
        col_ids = tuple(sorted({c for _, c in values}))
    return TransitionMatrix(row_ids, col_ids, values)


def write_transition_with_ids(matrix: TransitionMatrix, path: str | Path) -> int:
    """Write the link list plus a sidecar recording the full id universes."""
    n = write_transition(matrix, path)
    ids_path = Path(str(path) + ".ids")
    with open(ids_path, "w", encoding="utf-8", newline="\n") as fh:
        for r in matrix.row_ids:
            fh.write(f"{r}\n")
        fh.write("--cols--\n")
        for c in matrix.col_ids:
            fh.write(f"{c}\n")
    return n
