"""Disfluency scorers: higher values mean a less fluent sentence."""

import json
import logging
import math
from collections import Counter
from pathlib import Path
from typing import Callable, Iterable, Protocol, Sequence, runtime_checkable

from .errors import DataError
from .models import Sentence

logger = logging.getLogger(__name__)

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"


class ScorerError(DataError):
    """A sentence cannot be scored."""

    pass


@runtime_checkable
class FluencyScorer(Protocol):
    """Deterministic sentence → disfluency mapping."""

    scorer_id: str

    def disfluency(self, sentence: Sentence) -> float: ...


class NGramLM:
    """
    Add-k smoothed n-gram language model; disfluency is perplexity.

    Contexts are padded with ``<s>``; every sentence ends with ``</s>``;
    tokens outside the vocabulary score as ``<unk>``.
    """

    def __init__(self, order: int = 3, k: float = 1.0, vocabulary: Iterable[str] = ()):
        if order < 1:
            raise ScorerError(f"N-gram order must be >= 1, got {order}")
        if k <= 0:
            raise ScorerError(f"Smoothing constant must be positive, got {k}")
        self.order = order
        self.k = k
        self.vocabulary = set(vocabulary) | {EOS, UNK}
        self.vocabulary.discard(BOS)
        self.ngram_counts: Counter = Counter()
        self.context_counts: Counter = Counter()
        self.scorer_id = f"ngram-{order}-k{k:g}"

    def _map(self, token: str) -> str:
        return token if token in self.vocabulary else UNK

    def _padded(self, tokens: Sequence[str]) -> list[str]:
        return [BOS] * (self.order - 1) + [self._map(t) for t in tokens] + [EOS]

    def fit(self, sentences: Iterable[Sequence[str]]) -> "NGramLM":
        sentences = [list(s) for s in sentences]
        for tokens in sentences:
            self.vocabulary.update(tokens)
        self.vocabulary.discard(BOS)
        for tokens in sentences:
            padded = self._padded(tokens)
            for i in range(self.order - 1, len(padded)):
                context = tuple(padded[i - self.order + 1:i])
                self.ngram_counts[context + (padded[i],)] += 1
                self.context_counts[context] += 1
        return self

    def prob(self, token: str, context: Sequence[str]) -> float:
        """Smoothed P(token | last order-1 context tokens)."""
        context = tuple(context)[len(context) - (self.order - 1):] if self.order > 1 else ()
        context = tuple(c if c == BOS else self._map(c) for c in context)
        token = self._map(token)
        numerator = self.ngram_counts[context + (token,)] + self.k
        denominator = self.context_counts[context] + self.k * len(self.vocabulary)
        return numerator / denominator

    def log_prob(self, tokens: Sequence[str]) -> tuple[float, int]:
        """Total natural-log probability and the number of scored positions."""
        padded = self._padded(tokens)
        total = 0.0
        for i in range(self.order - 1, len(padded)):
            total += math.log(self.prob(padded[i], padded[i - self.order + 1:i]))
        return total, len(padded) - (self.order - 1)

    def perplexity(self, tokens: Sequence[str]) -> float:
        total, m = self.log_prob(tokens)
        return math.exp(-total / m)

    def disfluency(self, sentence: Sentence) -> float:
        return self.perplexity(sentence.tokens)


def ngram_train(sentences: Iterable[Sentence | Sequence[str]], order: int = 3, k: float = 1.0) -> NGramLM:
    """
    Train an n-gram model.

    Raises:
        ScorerError: If the corpus is empty
    """
    token_lists = [s.tokens if isinstance(s, Sentence) else tuple(s) for s in sentences]
    if not token_lists:
        raise ScorerError("Cannot train a language model on an empty corpus")
    model = NGramLM(order=order, k=k).fit(token_lists)
    logger.info(
        f"Trained {order}-gram model on {len(token_lists)} sentences "
        f"(vocabulary {len(model.vocabulary)}, k={k:g})"
    )
    return model


class StubScorer:
    """Explicit sentence text → disfluency table."""

    def __init__(self, table: dict[str, float], scorer_id: str = "stub"):
        self.table = {str(text): float(value) for text, value in table.items()}
        self.scorer_id = scorer_id

    @classmethod
    def from_file(cls, path: Path) -> "StubScorer":
        """Load a JSON object mapping sentence text to a value."""
        path = Path(path)
        try:
            with open(path, 'r', encoding='utf-8') as f:
                table = json.load(f)
        except FileNotFoundError:
            raise ScorerError(f"Stub score file not found: {path}")
        except json.JSONDecodeError as e:
            raise ScorerError(f"Stub score file {path} is not valid JSON: {e}")
        if not isinstance(table, dict):
            raise ScorerError(f"Stub score file {path} must hold a JSON object")
        return cls(table, scorer_id=f"stub-{path.stem}")

    def disfluency(self, sentence: Sentence) -> float:
        try:
            return self.table[sentence.text]
        except KeyError:
            raise ScorerError(f"No stub score for sentence '{sentence.text}'")


class NegatedScorer:
    """Adapter for similarity-style scorers where higher means better."""

    def __init__(self, similarity: Callable[[Sentence], float], scorer_id: str = "negated"):
        self.similarity = similarity
        self.scorer_id = scorer_id

    def disfluency(self, sentence: Sentence) -> float:
        return -float(self.similarity(sentence))


class RemotePerplexityScorer:
    """Perplexity from a remote model's prompt token log-probabilities."""

    def __init__(self, client):
        self.client = client
        self.scorer_id = f"remote-{client.model}"

    def close(self) -> None:
        self.client.close()

    def disfluency(self, sentence: Sentence) -> float:
        return self.client.perplexity(sentence.text)
