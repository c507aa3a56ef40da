"""Initial pairwise association mining over edit transactions."""

import logging
from collections import Counter
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Callable, Iterable, Optional

from .config import MiningConfig
from .edits import extract_pair
from .errors import DataError
from .jsonl import read_jsonl, write_jsonl
from .models import Edit, EditOp, EditSet, PairStats, SentencePair

logger = logging.getLogger(__name__)

OP_MARKERS = {EditOp.INSERT: "+", EditOp.DELETE: "-", EditOp.SUBSTITUTE: "~"}

Transaction = frozenset[str]


class MiningError(DataError):
    """Mining input is empty or an associations file is malformed."""

    pass


def normalize_text(text: str, language: str) -> str:
    """Lowercase for cased scripts; zh is left alone."""
    return text if language == "zh" else text.lower()


def item_key(edit: Edit) -> str:
    """
    Canonical item for an edit.

    Insert/Substitute key on the target text, Delete on the source text.
    """
    text = edit.src_text if edit.op is EditOp.DELETE else edit.tgt_text
    return OP_MARKERS[edit.op] + normalize_text(text, edit.language)


def key_text(key: str) -> str:
    """Item text without its operation marker."""
    return key[1:] if key[:1] in ("+", "-", "~") else key


def char_bigrams(text: str) -> set[str]:
    if len(text) < 2:
        return {text}
    return {text[i:i + 2] for i in range(len(text) - 1)}


def text_similarity(a: str, b: str) -> float:
    """Jaccard overlap of the character bigrams of two item texts."""
    left, right = char_bigrams(key_text(a)), char_bigrams(key_text(b))
    union = left | right
    return len(left & right) / len(union) if union else 1.0


def build_transactions(
    corpus: Iterable[SentencePair],
    extractor: Optional[Callable[[SentencePair], EditSet]] = None,
) -> list[Transaction]:
    """One item set per pair; pairs without edits give empty transactions."""
    extractor = extractor or extract_pair
    return [frozenset(item_key(edit) for edit in extractor(pair)) for pair in corpus]


@dataclass
class CountTables:
    """Item and pair occurrence counts; tables from disjoint partitions add up."""

    n_transactions: int = 0
    items: Counter = field(default_factory=Counter)
    pairs: Counter = field(default_factory=Counter)

    def update(self, transactions: Iterable[Transaction]) -> "CountTables":
        for transaction in transactions:
            self.n_transactions += 1
            ordered = sorted(transaction)
            self.items.update(ordered)
            self.pairs.update(combinations(ordered, 2))
        return self

    def merge(self, other: "CountTables") -> "CountTables":
        return CountTables(
            n_transactions=self.n_transactions + other.n_transactions,
            items=self.items + other.items,
            pairs=self.pairs + other.pairs,
        )

    def frequent_items(self, min_freq: int) -> list[str]:
        return sorted(item for item, count in self.items.items() if count >= min_freq)

    def co_occur(self, a: str, b: str) -> int:
        return self.pairs[(a, b) if a < b else (b, a)]


def count_transactions(transactions: Iterable[Transaction]) -> CountTables:
    return CountTables().update(transactions)


def pair_stats(a: str, b: str, tables: CountTables) -> PairStats:
    """Statistics of one unordered pair, with ``item_a < item_b``."""
    if b < a:
        a, b = b, a
    co = tables.co_occur(a, b)
    count_a, count_b = tables.items[a], tables.items[b]
    union = count_a + count_b - co
    return PairStats(
        item_a=a,
        item_b=b,
        co_count=co,
        count_a=count_a,
        count_b=count_b,
        jaccard=co / union if union else 0.0,
        confidence=max(co / count_a, co / count_b) if count_a and count_b else 0.0,
        lift=co * tables.n_transactions / (count_a * count_b) if count_a and count_b else 0.0,
    )


def accepts(stats: PairStats, config: MiningConfig) -> bool:
    return (
        stats.co_count >= config.min_cooccurrence
        and stats.jaccard > config.min_pair_jaccard
        and stats.confidence > config.min_confidence
        and stats.lift > config.min_lift
        and text_similarity(stats.item_a, stats.item_b) < config.word_jaccard_filter
    )


def mine_from_tables(tables: CountTables, config: MiningConfig) -> list[PairStats]:
    """Filter candidate pairs of frequent items; sorted by Jaccard, then keys."""
    frequent = set(tables.frequent_items(config.min_item_freq))
    accepted = []
    for (a, b), co in tables.pairs.items():
        if a not in frequent or b not in frequent or co < config.min_cooccurrence:
            continue
        stats = pair_stats(a, b, tables)
        if accepts(stats, config):
            accepted.append(stats)

    accepted.sort(key=lambda s: (-s.jaccard, s.item_a, s.item_b))
    return accepted


def mine_pairs(transactions: list[Transaction], config: MiningConfig) -> list[PairStats]:
    """
    Mine associated item pairs.

    Raises:
        MiningError: If there are no transactions
    """
    if not transactions:
        raise MiningError("Cannot mine associations from an empty transaction list")

    tables = count_transactions(transactions)
    accepted = mine_from_tables(tables, config)
    logger.info(
        f"Mined {len(accepted)} associations from {tables.n_transactions} transactions "
        f"({len(tables.frequent_items(config.min_item_freq))} frequent items)"
    )
    return accepted


def save_associations(path: Path, associations: Iterable[PairStats]) -> int:
    return write_jsonl(path, (stats.to_dict() for stats in associations))


def load_associations(path: Path) -> list[PairStats]:
    associations = []
    for line_number, record in read_jsonl(Path(path)):
        try:
            associations.append(PairStats.from_dict(record))
        except (KeyError, TypeError, ValueError) as e:
            raise MiningError(f"{path}:{line_number}: malformed association record ({e})")
    return associations
