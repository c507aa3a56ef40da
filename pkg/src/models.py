"""Data structures and type definitions for the edit-impact pipeline."""

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Optional

import networkx as nx

from .errors import DataError


def joiner(language: str) -> str:
    """String used to join tokens back into text for a language."""
    return "" if language == "zh" else " "


def split_joined(text: str, language: str) -> tuple[str, ...]:
    """Inverse of joining tokens with ``joiner(language)``."""
    if not text:
        return ()
    if language == "zh":
        return tuple(text)
    return tuple(text.split(" "))


@dataclass(frozen=True)
class Sentence:
    """Tokenized sentence; ``raw`` keeps the original text for serialization."""

    tokens: tuple[str, ...]
    language: str = "en"
    raw: str = field(default="", compare=False)

    @property
    def text(self) -> str:
        return joiner(self.language).join(self.tokens)

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class SentencePair:
    """A source sentence and its correction."""

    id: str
    source: Sentence
    target: Sentence
    language: str = "en"

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "source": self.source.raw or self.source.text,
            "target": self.target.raw or self.target.text,
            "lang": self.language,
        }


@dataclass(frozen=True)
class DependencyTree:
    """
    Dependency parse of a target sentence.

    ``heads[i]`` is the 1-based head of token i+1, 0 marks the root
    (CoNLL-U convention). ``relations[i]`` is that token's label.
    """

    heads: tuple[int, ...]
    relations: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.heads)

    @property
    def root(self) -> int:
        """0-based index of the root token."""
        return self.heads.index(0)

    def head_of(self, index: int) -> Optional[int]:
        """0-based head of a 0-based token, None for the root."""
        head = self.heads[index]
        return head - 1 if head else None

    def to_graph(self) -> nx.Graph:
        """Undirected graph over 0-based token indices."""
        graph = nx.Graph()
        graph.add_nodes_from(range(len(self.heads)))
        for child, head in enumerate(self.heads):
            if head:
                graph.add_edge(child, head - 1, relation=self.relations[child])
        return graph


@dataclass(frozen=True)
class CorpusStats:
    """Corpus-level size statistics."""

    sentence_count: int
    avg_len: float
    avg_edits: float

    def to_dict(self) -> dict:
        return {
            "sentence_count": self.sentence_count,
            "avg_len": self.avg_len,
            "avg_edits": self.avg_edits,
        }


class EditOp(Enum):
    """Atomic edit operation."""

    INSERT = "insert"
    DELETE = "delete"
    SUBSTITUTE = "substitute"


@dataclass(frozen=True)
class Edit:
    """
    One atomic edit: a source span replaced by a target span.

    Spans are half-open token intervals; the token tuples carry the text on
    each side so edits can be applied without the target sentence.
    """

    op: EditOp
    src_span: tuple[int, int]
    tgt_span: tuple[int, int]
    src_tokens: tuple[str, ...]
    tgt_tokens: tuple[str, ...]
    language: str = "en"

    def __post_init__(self):
        i, j = self.src_span
        p, q = self.tgt_span
        if i > j or p > q or i < 0 or p < 0:
            raise DataError(f"Invalid edit spans {self.src_span} -> {self.tgt_span}")
        if len(self.src_tokens) != j - i or len(self.tgt_tokens) != q - p:
            raise DataError(f"Edit tokens do not match spans {self.src_span} -> {self.tgt_span}")

        src_empty, tgt_empty = i == j, p == q
        if self.op is EditOp.INSERT and not (src_empty and not tgt_empty):
            raise DataError("Insert edits need an empty source span and a non-empty target span")
        if self.op is EditOp.DELETE and not (tgt_empty and not src_empty):
            raise DataError("Delete edits need an empty target span and a non-empty source span")
        if self.op is EditOp.SUBSTITUTE and (src_empty or tgt_empty):
            raise DataError("Substitute edits need non-empty spans on both sides")

    @property
    def src_text(self) -> str:
        return joiner(self.language).join(self.src_tokens)

    @property
    def tgt_text(self) -> str:
        return joiner(self.language).join(self.tgt_tokens)

    def to_dict(self) -> dict:
        return {
            "op": self.op.value,
            "src_span": list(self.src_span),
            "tgt_span": list(self.tgt_span),
            "src_text": self.src_text,
            "tgt_text": self.tgt_text,
        }

    @classmethod
    def from_dict(cls, data: dict, language: str = "en") -> "Edit":
        try:
            return cls(
                op=EditOp(data["op"]),
                src_span=(int(data["src_span"][0]), int(data["src_span"][1])),
                tgt_span=(int(data["tgt_span"][0]), int(data["tgt_span"][1])),
                src_tokens=split_joined(data["src_text"], language),
                tgt_tokens=split_joined(data["tgt_text"], language),
                language=language,
            )
        except (KeyError, IndexError, TypeError, ValueError) as e:
            raise DataError(f"Malformed edit record {data!r}: {e}")


@dataclass(frozen=True)
class EditSet:
    """All atomic edits of one sentence pair, ordered by source position."""

    pair_id: str
    edits: tuple[Edit, ...] = ()
    language: str = "en"

    def __len__(self) -> int:
        return len(self.edits)

    def __iter__(self) -> Iterator[Edit]:
        return iter(self.edits)

    def __getitem__(self, index: int) -> Edit:
        return self.edits[index]

    def to_dict(self) -> dict:
        return {
            "id": self.pair_id,
            "lang": self.language,
            "edits": [edit.to_dict() for edit in self.edits],
        }


@dataclass(frozen=True)
class EditGroup:
    """Indices of edits that are scored and ranked together."""

    members: tuple[int, ...]

    def __post_init__(self):
        if not self.members:
            raise DataError("Edit groups cannot be empty")
        object.__setattr__(self, "members", tuple(sorted(self.members)))

    @property
    def first(self) -> int:
        return self.members[0]

    def __len__(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class PairStats:
    """Co-occurrence statistics for one unordered pair of items."""

    item_a: str
    item_b: str
    co_count: int
    count_a: int
    count_b: int
    jaccard: float
    confidence: float
    lift: float

    def to_dict(self) -> dict:
        return {
            "item_a": self.item_a,
            "item_b": self.item_b,
            "co_count": self.co_count,
            "count_a": self.count_a,
            "count_b": self.count_b,
            "jaccard": self.jaccard,
            "confidence": self.confidence,
            "lift": self.lift,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PairStats":
        return cls(
            item_a=str(data["item_a"]),
            item_b=str(data["item_b"]),
            co_count=int(data["co_count"]),
            count_a=int(data["count_a"]),
            count_b=int(data["count_b"]),
            jaccard=float(data["jaccard"]),
            confidence=float(data["confidence"]),
            lift=float(data["lift"]),
        )


@dataclass(frozen=True)
class LabeledPair:
    """Training example for the association classifier (label 1 = associated)."""

    item_a: str
    item_b: str
    label: int

    def __post_init__(self):
        if self.item_a == self.item_b:
            raise DataError(f"Labeled pair needs two distinct items, got '{self.item_a}' twice")
        if self.label not in (0, 1):
            raise DataError(f"Label must be 0 or 1, got {self.label}")


class EditLabel(Enum):
    """Importance class of an edit."""

    CORRECTED = "corrected"
    REASONABLE = "reasonable"

    @classmethod
    def parse(cls, value: str) -> "EditLabel":
        """Case- and whitespace-insensitive parse."""
        normalized = str(value).strip().lower()
        for label in cls:
            if label.value == normalized:
                return label
        raise DataError(f"Unrecognized edit label '{value}'")


@dataclass(frozen=True)
class LabeledRanking:
    """Labels read in predicted rank order."""

    labels: tuple[EditLabel, ...]

    @property
    def k(self) -> int:
        return len(self.labels)

    @property
    def n_cor(self) -> int:
        return sum(1 for label in self.labels if label is EditLabel.CORRECTED)

    @property
    def n_rea(self) -> int:
        return self.k - self.n_cor


@dataclass(frozen=True)
class RankedOutput:
    """
    Ordered edit groups of one instance.

    ``edit_rank[i]`` is the 1-based position of edit i; all members of a group
    share the position of the group.
    """

    pair_id: str
    ranker: str
    ordered_groups: tuple[tuple[EditGroup, Optional[float]], ...]
    edit_rank: tuple[int, ...]
    curve: Optional[tuple[float, ...]] = None

    @classmethod
    def from_order(
        cls,
        pair_id: str,
        ranker: str,
        ordered: list[tuple[EditGroup, Optional[float]]],
        k: int,
    ) -> "RankedOutput":
        """Build the flattened per-edit rank from an ordered group list."""
        edit_rank = [0] * k
        for position, (group, _) in enumerate(ordered, start=1):
            for member in group.members:
                edit_rank[member] = position
        if any(rank == 0 for rank in edit_rank):
            raise DataError(f"Ranking for '{pair_id}' does not cover all {k} edits")
        return cls(pair_id, ranker, tuple(ordered), tuple(edit_rank))

    @property
    def groups(self) -> list[EditGroup]:
        return [group for group, _ in self.ordered_groups]

    def to_dict(self) -> dict:
        return {
            "id": self.pair_id,
            "ranker": self.ranker,
            "groups": [
                {"members": list(group.members), "delta": delta}
                for group, delta in self.ordered_groups
            ],
            "edit_rank": list(self.edit_rank),
            "curve": list(self.curve) if self.curve is not None else None,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RankedOutput":
        try:
            ordered = tuple(
                (EditGroup(tuple(int(m) for m in g["members"])),
                 None if g.get("delta") is None else float(g["delta"]))
                for g in data["groups"]
            )
            curve = data.get("curve")
            return cls(
                pair_id=str(data["id"]),
                ranker=str(data["ranker"]),
                ordered_groups=ordered,
                edit_rank=tuple(int(r) for r in data["edit_rank"]),
                curve=tuple(float(c) for c in curve) if curve is not None else None,
            )
        except (KeyError, TypeError, ValueError) as e:
            raise DataError(f"Malformed ranking record: {e}")
