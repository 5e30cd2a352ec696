"""Batch text encoding into the EMB1 binary embedding store.

EMB1 layout (little-endian): magic "EMB1", u32 dim, u64 count, then per
record [u16 id byte length, UTF-8 id, dim x f32]. Records are written in
input order; vectors are float32 so any reader sees bit-identical values.
"""

from __future__ import annotations

import csv
import json
import struct
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np

_MAGIC = b"EMB1"


class EmbedderError(Exception):
    exit_code = 1


class ValidationError(EmbedderError):
    exit_code = 2


class InputError(EmbedderError):
    exit_code = 3


class ModelError(EmbedderError):
    exit_code = 4


class SentenceModel(Protocol):
    """Anything with a batch ``encode`` returning an (n, dim) array."""

    def encode(self, texts: list[str]) -> np.ndarray: ...


@dataclass(frozen=True)
class EncodeJob:
    input_path: Path
    model_id: str
    output_path: Path
    batch_size: int = 32
    normalize: bool = True

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValidationError(f"batch size must be >= 1, got {self.batch_size}")


def read_texts(path: Path) -> list[tuple[str, str]]:
    """Parse the id,text input CSV, enforcing unique ids and non-empty text."""
    rows: list[tuple[str, str]] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or not {"id", "text"} <= set(reader.fieldnames):
            raise ValidationError(f"{path}: expected columns id,text")
        for lineno, row in enumerate(reader, start=2):
            rid, text = row["id"], row["text"]
            if rid in seen:
                raise InputError(f"{path}:{lineno}: duplicate id '{rid}'")
            seen.add(rid)
            if not text or not text.strip():
                raise InputError(f"{path}:{lineno}: empty text for id '{rid}'")
            rows.append((rid, text))
    if not rows:
        raise InputError(f"{path}: no records")
    return rows


def load_model(model_id: str) -> SentenceModel:
    """Resolve a sentence-embedding model by identifier.

    Deterministic inference settings: evaluation mode, no dropout."""
    try:
        from sentence_transformers import SentenceTransformer
    except ImportError as exc:
        raise ModelError(f"sentence-transformers is not installed: {exc}") from exc
    try:
        model = SentenceTransformer(model_id)
        model.eval()
        return model
    except Exception as exc:
        raise ModelError(f"cannot load model '{model_id}': {exc}") from exc


def _model_version(model: SentenceModel, model_id: str) -> str:
    for attr in ("model_card_data", "__version__", "version"):
        value = getattr(model, attr, None)
        if isinstance(value, str):
            return value
    # only consult the backend library if it is actually in use
    st = sys.modules.get("sentence_transformers")
    if st is not None:
        return f"sentence-transformers {st.__version__}"
    return "unknown"


def encode(job: EncodeJob, model: SentenceModel | None = None) -> Path:
    """Encode the input file into an EMB1 store plus a JSON sidecar manifest.

    The sidecar records the model identifier and resolved version so runs
    are attributable even when the upstream checkpoint drifts."""
    rows = read_texts(job.input_path)
    if model is None:
        model = load_model(job.model_id)

    ids = [rid for rid, _ in rows]
    texts = [text for _, text in rows]
    chunks: list[np.ndarray] = []
    for start in range(0, len(texts), job.batch_size):
        batch = texts[start : start + job.batch_size]
        vectors = np.asarray(model.encode(batch), dtype=np.float32)
        if vectors.ndim != 2 or vectors.shape[0] != len(batch):
            raise ModelError(
                f"model returned shape {vectors.shape} for a batch of {len(batch)}"
            )
        chunks.append(vectors)
    matrix = np.vstack(chunks)
    dim = int(matrix.shape[1])

    if job.normalize:
        norms = np.linalg.norm(matrix, axis=1, keepdims=True)
        zero = norms[:, 0] == 0.0
        if zero.any():
            raise ModelError(f"zero vector for id '{ids[int(np.argmax(zero))]}'")
        matrix = (matrix / norms).astype(np.float32)

    write_store(job.output_path, ids, matrix)
    manifest = {
        "model": job.model_id,
        "model_version": _model_version(model, job.model_id),
        "dim": dim,
        "count": len(ids),
        "normalized": job.normalize,
        "input": job.input_path.name,
    }
    sidecar = Path(str(job.output_path) + ".json")
    with open(sidecar, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return job.output_path


def write_store(path: Path, ids: list[str], matrix: np.ndarray) -> None:
    """Write records in input order, bit-exact EMB1."""
    matrix = np.ascontiguousarray(matrix, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IQ", matrix.shape[1], len(ids)))
        for rid, vec in zip(ids, matrix):
            raw = rid.encode("utf-8")
            if len(raw) > 0xFFFF:
                raise InputError(f"id too long: '{rid[:32]}...'")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(vec.tobytes())


def read_store(path: Path) -> tuple[int, dict[str, np.ndarray]]:
    """Minimal reader used by the self-tests (the pipeline has its own)."""
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise InputError(f"{path}: not an EMB1 file")
        dim, count = struct.unpack("<IQ", fh.read(12))
        entries: dict[str, np.ndarray] = {}
        for _ in range(count):
            (id_len,) = struct.unpack("<H", fh.read(2))
            rid = fh.read(id_len).decode("utf-8")
            entries[rid] = np.frombuffer(fh.read(4 * dim), dtype="<f4").copy()
    return int(dim), entries
