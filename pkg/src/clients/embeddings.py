"""Remote embedding backend client."""

import logging
from pathlib import Path
from typing import Optional

import numpy as np

from ..cache import digest
from ..config import RemoteConfig
from .http import RemoteClient, RemoteError, RemoteResponseError, ServiceClient

logger = logging.getLogger(__name__)


class EmbeddingClient(ServiceClient):
    """
    POST {embeddings_path} {"model", "input": [...]}.

    Vectors are cached per (model, text); only uncached texts are sent,
    in batches of ``batch_size``.
    """

    def __init__(self, config: RemoteConfig, cache_dir: Optional[Path] = None):
        if not config.embedding_model:
            raise RemoteError("No remote embedding model configured (remote.embedding_model)")
        self.config = config
        self.model = config.embedding_model
        self.http = RemoteClient(config, "embeddings", cache_dir=cache_dir)

    def _key(self, text: str) -> str:
        return digest(self.model, text)

    def embed(self, texts: list[str]) -> list[np.ndarray]:
        """
        One vector per text, in input order.

        Raises:
            RemoteResponseError: Wrong count, mixed dimensions or non-finite values
        """
        if not texts:
            raise RemoteError("Cannot request embeddings for an empty batch")

        found: dict[str, np.ndarray] = {}
        if self.http.cache is not None:
            for text in dict.fromkeys(texts):
                stored = self.http.cache.get(self._key(text))
                if stored is not None:
                    found[text] = np.asarray(stored, dtype=np.float64)

        missing = [text for text in dict.fromkeys(texts) if text not in found]
        size = max(1, self.config.batch_size)
        for start in range(0, len(missing), size):
            batch = missing[start:start + size]
            for text, vector in zip(batch, self._request(batch)):
                found[text] = vector
                if self.http.cache is not None:
                    self.http.cache.set(self._key(text), vector.tolist())

        vectors = [found[text] for text in texts]
        dims = {vector.size for vector in vectors}
        if len(dims) > 1:
            raise RemoteResponseError(f"Embedding model '{self.model}' returned mixed dimensions {sorted(dims)}")
        return vectors

    def _request(self, batch: list[str]) -> list[np.ndarray]:
        data = self.http.post_json(
            self.config.embeddings_path, {"model": self.model, "input": batch}, use_cache=False
        )
        try:
            items = sorted(data["data"], key=lambda item: item["index"])
            vectors = [np.asarray(item["embedding"], dtype=np.float64) for item in items]
        except (KeyError, TypeError, ValueError) as e:
            raise RemoteResponseError(f"Malformed embeddings response: {e}")

        if len(vectors) != len(batch):
            raise RemoteResponseError(f"Requested {len(batch)} embeddings, received {len(vectors)}")
        if [item["index"] for item in items] != list(range(len(batch))):
            raise RemoteResponseError("Embedding response indices do not cover the batch")
        dims = {vector.size for vector in vectors}
        if len(dims) != 1 or any(vector.ndim != 1 for vector in vectors):
            raise RemoteResponseError(f"Inconsistent embedding dimensions in one response: {sorted(dims)}")
        for text, vector in zip(batch, vectors):
            if not np.all(np.isfinite(vector)):
                raise RemoteResponseError(f"Non-finite embedding returned for '{text}'")

        logger.debug(f"Embedded {len(batch)} texts with {self.model}")
        return vectors
