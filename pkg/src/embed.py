"""Embedding providers: offline hash/file tables, remote backend, caching, MRL truncation."""

import hashlib
import logging
import threading
from pathlib import Path
from typing import Iterable, Optional, Protocol, runtime_checkable

import numpy as np

from .cache import DiskCache, digest
from .clients.embeddings import EmbeddingClient
from .config import EmbeddingConfig, RemoteConfig
from .errors import DataError
from .jsonl import read_jsonl
from .metrics import embedding_misses_total

logger = logging.getLogger(__name__)


class EmbeddingError(DataError):
    """Text cannot be embedded or a vector is invalid."""

    pass


@runtime_checkable
class EmbeddingProvider(Protocol):
    """Deterministic text → vector mapping of a fixed dimension."""

    provider_id: str
    dim: int

    def embed(self, text: str) -> np.ndarray: ...


class HashEmbeddingProvider:
    """Pseudo-random unit vectors seeded by a SHA-256 digest of the text."""

    def __init__(self, dim: int, seed: int = 0):
        if dim < 1:
            raise EmbeddingError(f"Embedding dimension must be >= 1, got {dim}")
        self.dim = dim
        self.seed = seed
        self.provider_id = f"hash-d{dim}-s{seed}"

    def embed(self, text: str) -> np.ndarray:
        seed_bytes = hashlib.sha256(f"{self.seed}:{text}".encode("utf-8")).digest()
        rng = np.random.default_rng(int.from_bytes(seed_bytes[:16], "big"))
        vector = rng.standard_normal(self.dim)
        return vector / np.linalg.norm(vector)

    def embed_batch(self, texts: list[str]) -> list[np.ndarray]:
        return [self.embed(text) for text in texts]


class FileEmbeddingProvider:
    """
    Vectors looked up from a JSON Lines table {"text", "vector"}.

    Missing texts go to ``fallback`` when configured (counted in ``misses``),
    otherwise they raise.
    """

    def __init__(self, path: Path, fallback: Optional[EmbeddingProvider] = None):
        self.path = Path(path)
        self.fallback = fallback
        self.misses = 0
        self._lock = threading.Lock()
        self._table: dict[str, np.ndarray] = {}

        content_hash = hashlib.sha256()
        dim: Optional[int] = None
        for line_number, record in read_jsonl(self.path):
            try:
                text = record["text"]
                vector = np.asarray(record["vector"], dtype=np.float64)
            except (KeyError, TypeError, ValueError) as e:
                raise EmbeddingError(f"{self.path}:{line_number}: malformed embedding record ({e})")
            if not isinstance(text, str) or vector.ndim != 1 or vector.size == 0:
                raise EmbeddingError(f"{self.path}:{line_number}: expected a text and a flat vector")
            if not np.all(np.isfinite(vector)):
                raise EmbeddingError(f"{self.path}:{line_number}: vector for '{text}' has non-finite entries")
            if dim is None:
                dim = vector.size
            elif vector.size != dim:
                raise EmbeddingError(
                    f"{self.path}:{line_number}: vector length {vector.size} differs from {dim}"
                )
            if text in self._table:
                raise EmbeddingError(f"{self.path}:{line_number}: duplicate text '{text}'")
            self._table[text] = vector
            content_hash.update(f"{text}\x1f{vector.tobytes().hex()}\n".encode("utf-8"))

        if dim is None:
            raise EmbeddingError(f"Embedding file {self.path} holds no vectors")
        if fallback is not None and fallback.dim != dim:
            raise EmbeddingError(
                f"Fallback provider dimension {fallback.dim} differs from file dimension {dim}"
            )

        self.dim = dim
        self.provider_id = f"file-{content_hash.hexdigest()[:12]}"
        logger.info(f"Loaded {len(self._table)} vectors (dim {dim}) from {self.path}")

    def __contains__(self, text: str) -> bool:
        return text in self._table

    def embed(self, text: str) -> np.ndarray:
        vector = self._table.get(text)
        if vector is not None:
            return vector.copy()
        if self.fallback is None:
            raise EmbeddingError(f"No vector for '{text}' in {self.path}")
        with self._lock:
            self.misses += 1
        embedding_misses_total.labels(provider=self.provider_id).inc()
        logger.debug(f"Embedding miss for '{text}', using {self.fallback.provider_id}")
        return self.fallback.embed(text)


class RemoteEmbeddingProvider:
    """Adapter exposing the remote embedding client as a provider."""

    def __init__(self, client, dim: int):
        self.client = client
        self.dim = dim
        self.provider_id = f"remote-{client.model}"

    def close(self) -> None:
        self.client.close()

    def embed(self, text: str) -> np.ndarray:
        return self.embed_batch([text])[0]

    def embed_batch(self, texts: list[str]) -> list[np.ndarray]:
        vectors = self.client.embed(texts)
        for vector in vectors:
            if vector.size != self.dim:
                raise EmbeddingError(
                    f"Remote model '{self.client.model}' returned dimension {vector.size}, "
                    f"expected {self.dim}"
                )
        return vectors


class CachedProvider:
    """Memory cache in front of a provider, optionally persisted to disk."""

    def __init__(self, inner: EmbeddingProvider, disk: Optional[DiskCache] = None):
        self.inner = inner
        self.disk = disk
        self.dim = inner.dim
        self.provider_id = inner.provider_id
        self._memory: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()

    def close(self) -> None:
        if self.disk is not None:
            self.disk.close()
            self.disk = None
        close_provider(self.inner)

    def _key(self, text: str) -> str:
        return digest(self.provider_id, text)

    def _lookup(self, text: str) -> Optional[np.ndarray]:
        with self._lock:
            vector = self._memory.get(text)
        if vector is None and self.disk is not None:
            stored = self.disk.get(self._key(text))
            if stored is not None:
                vector = np.asarray(stored, dtype=np.float64)
                with self._lock:
                    self._memory[text] = vector
        return vector

    def _store(self, text: str, vector: np.ndarray) -> None:
        with self._lock:
            self._memory[text] = vector
        if self.disk is not None:
            self.disk.set(self._key(text), vector.tolist())

    def embed(self, text: str) -> np.ndarray:
        vector = self._lookup(text)
        if vector is None:
            vector = np.asarray(self.inner.embed(text), dtype=np.float64)
            self._store(text, vector)
        return vector.copy()

    def embed_batch(self, texts: list[str]) -> list[np.ndarray]:
        found = {text: self._lookup(text) for text in dict.fromkeys(texts)}
        missing = [text for text, vector in found.items() if vector is None]
        if missing:
            batch = getattr(self.inner, "embed_batch", None)
            vectors = batch(missing) if batch else [self.inner.embed(t) for t in missing]
            for text, vector in zip(missing, vectors):
                vector = np.asarray(vector, dtype=np.float64)
                self._store(text, vector)
                found[text] = vector
        return [found[text].copy() for text in texts]


class TruncatedProvider:
    """Matryoshka-style prefix truncation of another provider's vectors."""

    def __init__(self, inner: EmbeddingProvider, dim: int):
        if dim < 1 or dim > inner.dim:
            raise EmbeddingError(
                f"Cannot truncate {inner.provider_id} (dim {inner.dim}) to dimension {dim}"
            )
        self.inner = inner
        self.dim = dim
        self.provider_id = f"{inner.provider_id}-mrl{dim}"

    def close(self) -> None:
        close_provider(self.inner)

    def embed(self, text: str) -> np.ndarray:
        return truncate_mrl(self.inner.embed(text), self.dim)

    def embed_batch(self, texts: list[str]) -> list[np.ndarray]:
        batch = getattr(self.inner, "embed_batch", None)
        vectors = batch(texts) if batch else [self.inner.embed(t) for t in texts]
        return [truncate_mrl(vector, self.dim) for vector in vectors]


def close_provider(provider: EmbeddingProvider) -> None:
    """Release connections and cache handles held anywhere in a provider stack."""
    close = getattr(provider, "close", None)
    if close is not None:
        close()


def _check_vector(vector, provider: EmbeddingProvider, text: str) -> np.ndarray:
    vector = np.asarray(vector, dtype=np.float64)
    if vector.shape != (provider.dim,):
        raise EmbeddingError(
            f"Provider {provider.provider_id} returned shape {vector.shape} for '{text}', "
            f"expected ({provider.dim},)"
        )
    if not np.all(np.isfinite(vector)):
        raise EmbeddingError(f"Provider {provider.provider_id} returned non-finite values for '{text}'")
    return vector


def embed(provider: EmbeddingProvider, text: str) -> np.ndarray:
    """
    Embed one text, validating dimension and finiteness.

    Raises:
        EmbeddingError: Empty text or an invalid vector
    """
    if not text:
        raise EmbeddingError("Cannot embed empty text")
    return _check_vector(provider.embed(text), provider, text)


def embed_many(provider: EmbeddingProvider, texts: Iterable[str]) -> dict[str, np.ndarray]:
    """Embed distinct texts, batching when the provider supports it."""
    unique = list(dict.fromkeys(texts))
    for text in unique:
        if not text:
            raise EmbeddingError("Cannot embed empty text")
    batch = getattr(provider, "embed_batch", None)
    vectors = batch(unique) if batch and unique else [provider.embed(t) for t in unique]
    return {text: _check_vector(v, provider, text) for text, v in zip(unique, vectors)}


def truncate_mrl(vector, d: int) -> np.ndarray:
    """
    Keep the first ``d`` coordinates and L2-normalize; zero stays zero.

    Raises:
        EmbeddingError: If d is outside 1..len(vector)
    """
    vector = np.asarray(vector, dtype=np.float64)
    if d < 1 or d > vector.size:
        raise EmbeddingError(f"Cannot truncate a vector of dimension {vector.size} to {d}")
    head = vector[:d].copy()
    norm = np.linalg.norm(head)
    return head / norm if norm > 0 else head


def cosine(u, v) -> float:
    """Cosine similarity in [-1, 1]; 0 when either vector is zero."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise EmbeddingError(f"Dimension mismatch: {u.shape} vs {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        return 0.0
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def build_provider(
    config: EmbeddingConfig,
    remote: Optional[RemoteConfig] = None,
    cache_dir: Optional[Path] = None,
) -> EmbeddingProvider:
    """Assemble the configured provider stack: base → cache → MRL truncation."""
    if config.provider == "hash":
        provider: EmbeddingProvider = HashEmbeddingProvider(config.dim, config.seed)
    elif config.provider == "file":
        table = FileEmbeddingProvider(Path(config.file))
        if config.fallback == "hash":
            # fallback vectors take the table's dimension
            table.fallback = HashEmbeddingProvider(table.dim, config.seed)
        provider = table
    elif config.provider == "remote":
        client = EmbeddingClient(remote or RemoteConfig(), cache_dir=cache_dir)
        provider = RemoteEmbeddingProvider(client, config.dim)
    else:
        raise EmbeddingError(f"Unknown embedding provider '{config.provider}'")

    if config.cache:
        # the remote client keeps its own response cache
        use_disk = cache_dir is not None and config.provider != "remote"
        disk = DiskCache.for_namespace(cache_dir, provider.provider_id) if use_disk else None
        provider = CachedProvider(provider, disk)

    if config.mrl_dim is not None and config.mrl_dim != provider.dim:
        provider = TruncatedProvider(provider, config.mrl_dim)

    logger.info(f"Embedding provider: {provider.provider_id} (dim {provider.dim})")
    return provider
