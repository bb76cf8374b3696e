"""Embedding backends, the cosine matching score, and a persistent vector cache.

Backends are pluggable: the mock backend derives unit vectors from a seeded
hash of the text (deterministic, offline), while the HTTP backend speaks an
embeddings API.  Vectors round-trip bit-exactly through the cache (raw
little-endian float64 in an append-only .bin file plus a JSONL index).
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .errors import BackendError, DimensionMismatch, ZeroNorm

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EmbeddingVector:
    values: np.ndarray
    model: str

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", arr)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("embedding must be a non-empty 1-D vector")
        if not np.all(np.isfinite(arr)):
            raise ValueError("embedding has non-finite components")
        if float(np.linalg.norm(arr)) == 0.0:
            raise ZeroNorm("embedding has zero L2 norm")

    @property
    def dim(self) -> int:
        return int(self.values.size)


def cosine(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """Cosine similarity of two vectors; symmetric, in [-1, 1] up to rounding."""
    if a.dim != b.dim:
        raise DimensionMismatch(f"dim {a.dim} vs {b.dim}")
    na = float(np.linalg.norm(a.values))
    nb = float(np.linalg.norm(b.values))
    if na == 0.0 or nb == 0.0:
        raise ZeroNorm("cosine undefined for zero-norm vector")
    return float(np.dot(a.values, b.values) / (na * nb))


class EmbeddingBackend(Protocol):
    identifier: str
    calls: int  # texts actually sent to the backend

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]: ...


def mock_embedding(text: str, dim: int, seed: int = 0) -> EmbeddingVector:
    """Deterministic unit-norm vector from a seeded hash of the text."""
    if dim < 2:
        raise ValueError("dim must be >= 2")
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=16, key=str(seed).encode()).digest()
    rng = np.random.default_rng(int.from_bytes(digest, "big"))
    v = rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    return EmbeddingVector(values=v, model=f"mock-{dim}-s{seed}")


class MockEmbeddingBackend:
    """Offline backend: same text always maps to the same unit vector."""

    def __init__(self, dim: int = 64, seed: int = 0):
        if dim < 2:
            raise ValueError("dim must be >= 2")
        self.dim = dim
        self.seed = seed
        self.identifier = f"mock-{dim}-s{seed}"
        self.calls = 0
        self.truncations = 0
        self.max_chars: int | None = None

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]:
        self.calls += len(texts)
        return [mock_embedding(t, self.dim, self.seed).values for t in texts]


class HttpEmbeddingBackend:
    """Client for an OpenAI-style embeddings endpoint.

    The API key is read from ``api_key_env`` (never from config files).
    Texts beyond ``max_chars`` are truncated and counted in ``truncations``.
    """

    def __init__(
        self,
        model: str,
        endpoint: str = "https://api.openai.com/v1/embeddings",
        api_key_env: str = "OPENAI_API_KEY",
        max_chars: int = 16000,
        timeout: float = 60.0,
    ):
        self.model = model
        self.endpoint = endpoint
        self.api_key_env = api_key_env
        self.max_chars = max_chars
        self.timeout = timeout
        self.identifier = f"http:{model}"
        self.calls = 0
        self.truncations = 0

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]:
        import requests

        key = os.environ.get(self.api_key_env)
        if not key:
            raise BackendError(f"environment variable {self.api_key_env} is not set")
        payload_texts = []
        for t in texts:
            if len(t) > self.max_chars:
                self.truncations += 1
                t = t[: self.max_chars]
            payload_texts.append(t)
        try:
            resp = requests.post(
                self.endpoint,
                headers={"Authorization": f"Bearer {key}"},
                json={"model": self.model, "input": payload_texts},
                timeout=self.timeout,
            )
            resp.raise_for_status()
            data = resp.json()["data"]
        except Exception as exc:
            raise BackendError(f"embedding request failed: {exc}") from exc
        if len(data) != len(texts):
            raise BackendError(f"expected {len(texts)} embeddings, got {len(data)}")
        self.calls += len(texts)
        by_index = sorted(data, key=lambda d: d["index"])
        return [np.asarray(d["embedding"], dtype=np.float64) for d in by_index]


class VectorCache:
    """Append-only binary store with a JSONL index; bit-exact round-trips.

    Thread-safe for in-process concurrent use.  Keys are hashes of
    (backend identifier, text), so switching backends never aliases entries.
    """

    def __init__(self, directory: str | Path):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.bin_path = self.dir / "vectors.bin"
        self.idx_path = self.dir / "vectors.idx.jsonl"
        self._lock = threading.Lock()
        self._index: dict[str, tuple[int, int, str]] = {}  # key -> (offset, dim, model)
        self._load_index()

    @staticmethod
    def key_for(backend_id: str, text: str) -> str:
        return hashlib.sha256(f"{backend_id}\x00{text}".encode("utf-8")).hexdigest()

    def _load_index(self) -> None:
        if not self.idx_path.exists():
            return
        with self.idx_path.open(encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                self._index[rec["key"]] = (rec["offset"], rec["dim"], rec["model"])

    def get(self, key: str) -> EmbeddingVector | None:
        with self._lock:
            entry = self._index.get(key)
            if entry is None:
                return None
            offset, dim, model = entry
            with self.bin_path.open("rb") as fh:
                fh.seek(offset)
                raw = fh.read(8 * dim)
        values = np.frombuffer(raw, dtype="<f8").copy()
        return EmbeddingVector(values=values, model=model)

    def put(self, key: str, vector: EmbeddingVector) -> None:
        raw = np.ascontiguousarray(vector.values, dtype="<f8").tobytes()
        with self._lock:
            if key in self._index:
                return
            with self.bin_path.open("ab") as fh:
                offset = fh.tell()
                fh.write(raw)
            with self.idx_path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps({"key": key, "offset": offset,
                                     "dim": vector.dim, "model": vector.model}) + "\n")
            self._index[key] = (offset, vector.dim, vector.model)

    def __len__(self) -> int:
        return len(self._index)


def _validated(arr: np.ndarray, model: str, batch_index: int) -> EmbeddingVector:
    try:
        return EmbeddingVector(values=arr, model=model)
    except (ValueError, ZeroNorm) as exc:
        raise BackendError(f"backend returned an invalid vector: {exc}", batch_index=batch_index) from exc


def embed_texts(
    texts: Sequence[str],
    backend: EmbeddingBackend,
    cache: VectorCache | None = None,
    batch_size: int = 64,
    parallelism: int = 1,
) -> list[EmbeddingVector]:
    """Embed texts in order, consulting the cache first.

    Cache hits never reach the backend.  All returned vectors share the
    backend's dimension; a NaN/zero vector from the backend raises
    BackendError at this boundary.
    """
    if any(not isinstance(t, str) or not t for t in texts):
        raise ValueError("texts must be non-empty strings")

    results: list[EmbeddingVector | None] = [None] * len(texts)
    pending: list[int] = []
    for i, text in enumerate(texts):
        if cache is not None:
            hit = cache.get(VectorCache.key_for(backend.identifier, text))
            if hit is not None:
                results[i] = hit
                continue
        pending.append(i)

    # A text may repeat inside one call; embed each distinct pending text once.
    distinct: dict[str, list[int]] = {}
    for i in pending:
        distinct.setdefault(texts[i], []).append(i)
    ordered = list(distinct.keys())
    batches = [ordered[i : i + batch_size] for i in range(0, len(ordered), batch_size)]

    def run_batch(bi_batch: tuple[int, list[str]]) -> tuple[int, list[np.ndarray]]:
        bi, batch = bi_batch
        try:
            return bi, backend.embed_batch(batch)
        except BackendError as exc:
            exc.batch_index = bi
            raise

    if parallelism > 1 and len(batches) > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            outputs = dict(pool.map(run_batch, enumerate(batches)))
    else:
        outputs = dict(run_batch(x) for x in enumerate(batches))

    dims_seen: set[int] = set()
    for bi, batch in enumerate(batches):
        arrays = outputs[bi]
        if len(arrays) != len(batch):
            raise BackendError(f"backend returned {len(arrays)} vectors for {len(batch)} texts", batch_index=bi)
        for text, arr in zip(batch, arrays):
            vec = _validated(arr, backend.identifier, bi)
            dims_seen.add(vec.dim)
            if len(dims_seen) > 1:
                raise BackendError("backend returned vectors of mixed dimension", batch_index=bi)
            if cache is not None:
                cache.put(VectorCache.key_for(backend.identifier, text), vec)
            for i in distinct[text]:
                results[i] = vec

    assert all(r is not None for r in results)
    return results  # type: ignore[return-value]


def lookup(embeddings, text_id: str) -> EmbeddingVector:
    """Mapping access that reports the missing id instead of a bare KeyError."""
    from .errors import MissingEmbedding

    try:
        return embeddings[text_id]
    except KeyError:
        raise MissingEmbedding(f"no embedding for id {text_id!r}", text_id=text_id) from None


@dataclass
class EmbeddingStore:
    """Convenience view: id -> vector, built once per pipeline run."""

    backend_id: str
    vectors: dict[str, EmbeddingVector] = field(default_factory=dict)

    def add(self, ids: Sequence[str], vecs: Sequence[EmbeddingVector]) -> None:
        for i, v in zip(ids, vecs):
            self.vectors[i] = v

    def __getitem__(self, text_id: str) -> EmbeddingVector:
        from .errors import MissingEmbedding

        try:
            return self.vectors[text_id]
        except KeyError:
            raise MissingEmbedding(f"no embedding for id {text_id!r}", text_id=text_id) from None

    def __contains__(self, text_id: str) -> bool:
        return text_id in self.vectors
