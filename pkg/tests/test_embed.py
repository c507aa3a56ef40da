"""Tests for embedding providers."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from prometheus_client import REGISTRY

from src.cache import DiskCache
from src.config import EmbeddingConfig
from src.embed import (
    CachedProvider,
    EmbeddingError,
    FileEmbeddingProvider,
    HashEmbeddingProvider,
    TruncatedProvider,
    build_provider,
    close_provider,
    cosine,
    embed,
    embed_many,
    truncate_mrl,
)


def write_table(path, rows):
    path.write_text("".join(json.dumps({"text": t, "vector": v}) + "\n" for t, v in rows))
    return path


class CountingProvider:
    """Hash provider that counts calls."""

    def __init__(self, dim=4):
        self.inner = HashEmbeddingProvider(dim)
        self.dim = dim
        self.provider_id = "counting"
        self.calls = 0

    def embed(self, text):
        self.calls += 1
        return self.inner.embed(text)


@pytest.mark.unit
def test_hash_provider_is_deterministic(hash_provider):
    """Test the same text always maps to the same unit vector."""
    first = embed(hash_provider, "look")
    second = HashEmbeddingProvider(dim=8, seed=0).embed("look")

    assert np.array_equal(first, second)
    assert first.shape == (8,)
    assert np.linalg.norm(first) == pytest.approx(1.0)


@pytest.mark.unit
def test_hash_provider_seed_changes_vectors():
    """Test different seeds give different vectors."""
    a = HashEmbeddingProvider(dim=8, seed=0).embed("look")
    b = HashEmbeddingProvider(dim=8, seed=1).embed("look")

    assert not np.allclose(a, b)


@pytest.mark.unit
def test_file_provider_lookup(temp_dir):
    """Test stored vectors are returned exactly."""
    path = write_table(temp_dir / "vectors.jsonl", [("for", [0.5, -1.0, 2.0]), ("look", [1.0, 0.0, 0.0])])

    provider = FileEmbeddingProvider(path)

    assert provider.dim == 3
    assert provider.embed("for").tolist() == [0.5, -1.0, 2.0]
    assert "look" in provider


@pytest.mark.unit
def test_file_provider_miss_uses_fallback(temp_dir):
    """Test misses go to the fallback and are counted."""
    path = write_table(temp_dir / "vectors.jsonl", [("for", [0.5, -1.0, 2.0])])
    fallback = HashEmbeddingProvider(dim=3)
    provider = FileEmbeddingProvider(path, fallback=fallback)
    before = REGISTRY.get_sample_value(
        "editimpact_embedding_misses_total", {"provider": provider.provider_id}
    ) or 0.0

    vector = provider.embed("forward")

    assert np.array_equal(vector, fallback.embed("forward"))
    assert provider.misses == 1
    after = REGISTRY.get_sample_value("editimpact_embedding_misses_total", {"provider": provider.provider_id})
    assert after == before + 1


@pytest.mark.unit
def test_file_provider_miss_without_fallback(temp_dir):
    """Test misses raise without a fallback."""
    provider = FileEmbeddingProvider(write_table(temp_dir / "v.jsonl", [("for", [1.0])]))

    with pytest.raises(EmbeddingError, match="forward"):
        provider.embed("forward")


@pytest.mark.unit
def test_file_provider_validation(temp_dir):
    """Test inconsistent, non-finite and duplicate rows are rejected."""
    with pytest.raises(EmbeddingError, match="differs"):
        FileEmbeddingProvider(write_table(temp_dir / "a.jsonl", [("a", [1.0, 2.0]), ("b", [1.0])]))
    with pytest.raises(EmbeddingError, match="duplicate"):
        FileEmbeddingProvider(write_table(temp_dir / "b.jsonl", [("a", [1.0]), ("a", [2.0])]))
    with pytest.raises(EmbeddingError, match="no vectors"):
        FileEmbeddingProvider(write_table(temp_dir / "c.jsonl", []))

    path = temp_dir / "d.jsonl"
    path.write_text('{"text": "a", "vector": [NaN]}\n')
    with pytest.raises(EmbeddingError, match="non-finite"):
        FileEmbeddingProvider(path)


@pytest.mark.unit
def test_file_provider_id_tracks_content(temp_dir):
    """Test the provider id changes with the table contents."""
    a = FileEmbeddingProvider(write_table(temp_dir / "a.jsonl", [("x", [1.0, 2.0])]))
    b = FileEmbeddingProvider(write_table(temp_dir / "b.jsonl", [("x", [1.0, 2.0])]))
    c = FileEmbeddingProvider(write_table(temp_dir / "c.jsonl", [("x", [1.0, 3.0])]))

    assert a.provider_id == b.provider_id
    assert a.provider_id != c.provider_id


@pytest.mark.unit
def test_embed_rejects_empty_text(hash_provider):
    """Test empty strings cannot be embedded."""
    with pytest.raises(EmbeddingError, match="empty"):
        embed(hash_provider, "")
    with pytest.raises(EmbeddingError, match="empty"):
        embed_many(hash_provider, ["look", ""])


@pytest.mark.unit
def test_embed_many_deduplicates(hash_provider):
    """Test repeated texts are embedded once."""
    vectors = embed_many(hash_provider, ["look", "for", "look"])

    assert list(vectors) == ["look", "for"]


@pytest.mark.unit
def test_truncate_mrl():
    """Test the prefix is kept and renormalized."""
    assert truncate_mrl([3.0, 4.0, 12.0], 2).tolist() == pytest.approx([0.6, 0.8])
    assert truncate_mrl([1.0, 0.0, 0.0], 1).tolist() == [1.0]
    assert truncate_mrl([0.0, 0.0], 2).tolist() == [0.0, 0.0]

    with pytest.raises(EmbeddingError):
        truncate_mrl([1.0, 2.0], 3)
    with pytest.raises(EmbeddingError):
        truncate_mrl([1.0, 2.0], 0)


@settings(max_examples=100, deadline=None)
@given(
    values=st.lists(st.floats(min_value=-1e3, max_value=1e3), min_size=1, max_size=16),
    data=st.data(),
)
def test_truncate_mrl_unit_norm(values, data):
    """Property: truncating a nonzero prefix yields a unit vector."""
    d = data.draw(st.integers(min_value=1, max_value=len(values)))
    head = np.asarray(values[:d])

    result = truncate_mrl(values, d)

    if np.linalg.norm(head) > 1e-6:
        assert np.linalg.norm(result) == pytest.approx(1.0)
    else:
        assert result.shape == (d,)


@pytest.mark.unit
def test_cosine():
    """Test identity, orthogonality and a hand-computed value."""
    assert cosine([1.0, 2.0], [1.0, 2.0]) == pytest.approx(1.0)
    assert cosine([1.0, 0.0], [0.0, 1.0]) == 0.0
    assert cosine([1.0, 1.0], [1.0, 0.0]) == pytest.approx(1 / math.sqrt(2), abs=1e-6)
    assert cosine([0.0, 0.0], [1.0, 0.0]) == 0.0

    with pytest.raises(EmbeddingError, match="mismatch"):
        cosine([1.0], [1.0, 2.0])


@pytest.mark.unit
def test_cached_provider_is_transparent():
    """Test the cache returns the inner provider's vectors and calls it once per text."""
    inner = CountingProvider()
    cached = CachedProvider(inner)

    first = cached.embed("look")
    second = cached.embed("look")

    assert np.array_equal(first, inner.inner.embed("look"))
    assert np.array_equal(first, second)
    assert inner.calls == 1


@pytest.mark.unit
def test_cached_provider_persists(temp_dir):
    """Test vectors survive in the disk cache across instances."""
    inner = CountingProvider()
    disk = DiskCache(temp_dir / "vectors.sqlite")
    CachedProvider(inner, disk).embed_batch(["look", "for"])
    disk.close()

    reopened = DiskCache(temp_dir / "vectors.sqlite")
    fresh = CountingProvider()
    vectors = CachedProvider(fresh, reopened).embed_batch(["for", "look"])
    reopened.close()

    assert fresh.calls == 0
    assert np.allclose(vectors[0], inner.inner.embed("for"))


@pytest.mark.unit
def test_close_reaches_every_layer(mocker, temp_dir):
    """Test closing a provider stack closes the disk cache and the innermost provider."""
    inner = mocker.Mock(dim=8, provider_id="remote")
    disk = DiskCache(temp_dir / "vectors.sqlite")
    disk_close = mocker.spy(disk, "close")
    stack = TruncatedProvider(CachedProvider(inner, disk), 4)

    close_provider(stack)

    disk_close.assert_called_once()
    inner.close.assert_called_once()
    assert stack.inner.disk is None


@pytest.mark.unit
def test_truncated_provider():
    """Test the truncating wrapper reports the reduced dimension."""
    provider = TruncatedProvider(HashEmbeddingProvider(dim=8), 4)

    assert provider.dim == 4
    assert provider.provider_id.endswith("-mrl4")
    assert np.linalg.norm(provider.embed("look")) == pytest.approx(1.0)

    with pytest.raises(EmbeddingError):
        TruncatedProvider(HashEmbeddingProvider(dim=8), 16)


@pytest.mark.unit
def test_build_provider_stack(temp_dir):
    """Test the configured stack: base, cache, then truncation."""
    provider = build_provider(EmbeddingConfig(provider="hash", dim=16, mrl_dim=4), cache_dir=temp_dir)

    assert isinstance(provider, TruncatedProvider)
    assert isinstance(provider.inner, CachedProvider)
    assert provider.dim == 4
    assert embed(provider, "look").shape == (4,)


@pytest.mark.unit
def test_build_provider_file_fallback(temp_dir):
    """Test file providers get a hash fallback of the table's dimension."""
    path = write_table(temp_dir / "vectors.jsonl", [("for", [1.0, 0.0, 0.0])])

    provider = build_provider(EmbeddingConfig(provider="file", file=str(path), cache=False))

    assert provider.dim == 3
    assert embed(provider, "unseen").shape == (3,)
