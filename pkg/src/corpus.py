"""Parallel corpus loading, tokenization, filtering and dependency parses."""

import logging
import re
from pathlib import Path
from typing import Callable, Iterable, Optional

from .config import LANGUAGES
from .edits import extract_pair
from .errors import DataError
from .jsonl import read_jsonl, write_jsonl
from .models import CorpusStats, DependencyTree, EditSet, Sentence, SentencePair

logger = logging.getLogger(__name__)

# Word runs (keeping intra-word hyphens/apostrophes) or single punctuation marks
LATIN_TOKEN = re.compile(r"\w+(?:[-'’]\w+)*|[^\w\s]")

Extractor = Callable[[SentencePair], EditSet]


class CorpusError(DataError):
    """Pair file is malformed or violates corpus invariants."""

    pass


class ConllError(DataError):
    """CoNLL-U file is malformed or holds an invalid tree."""

    pass


def tokenize(text: str, language: str) -> Sentence:
    """
    Split text into tokens.

    zh: one token per non-whitespace character.
    Everything else: word runs and single punctuation marks.
    """
    if language == "zh":
        tokens = tuple(ch for ch in text if not ch.isspace())
    else:
        tokens = tuple(LATIN_TOKEN.findall(text))
    return Sentence(tokens=tokens, language=language, raw=text)


def make_pair(pair_id: str, source: str, target: str, language: str) -> SentencePair:
    """Tokenize both sides of a pair."""
    return SentencePair(
        id=pair_id,
        source=tokenize(source, language),
        target=tokenize(target, language),
        language=language,
    )


def load_pairs(path: Path) -> list[SentencePair]:
    """
    Load a JSON Lines pair file.

    Each line: {"id", "source", "target", "lang"}. Order is preserved.

    Raises:
        CorpusError: Malformed line (with line number) or duplicate id
    """
    path = Path(path)
    pairs: list[SentencePair] = []
    seen: dict[str, int] = {}

    for line_number, record in read_jsonl(path):
        missing = [key for key in ("id", "source", "target", "lang") if key not in record]
        if missing:
            raise CorpusError(f"{path}:{line_number}: missing field(s) {', '.join(missing)}")

        pair_id, source, target, language = (
            record["id"], record["source"], record["target"], record["lang"]
        )
        if not all(isinstance(v, str) for v in (pair_id, source, target, language)):
            raise CorpusError(f"{path}:{line_number}: id, source, target and lang must be strings")

        if pair_id in seen:
            raise CorpusError(
                f"{path}:{line_number}: duplicate id '{pair_id}' (first seen on line {seen[pair_id]})"
            )
        seen[pair_id] = line_number

        if language not in LANGUAGES:
            logger.warning(f"{path}:{line_number}: unknown language '{language}' for '{pair_id}', using 'other'")
            language = "other"

        pairs.append(make_pair(pair_id, source, target, language))

    logger.info(f"Loaded {len(pairs)} sentence pairs from {path}")
    return pairs


def save_pairs(path: Path, pairs: Iterable[SentencePair]) -> int:
    """Write pairs in the format read by load_pairs."""
    return write_jsonl(path, (pair.to_dict() for pair in pairs))


def check_tree(heads: list[int], sent_id: str) -> None:
    """
    Validate a head assignment: heads in range, a single root, no cycle.

    Raises:
        ConllError: Naming the sentence id
    """
    n = len(heads)
    if n == 0:
        raise ConllError(f"Sentence '{sent_id}' has no tokens")

    for index, head in enumerate(heads, start=1):
        if head < 0 or head > n:
            raise ConllError(
                f"Sentence '{sent_id}': head {head} of token {index} is out of range 0..{n}"
            )

    roots = [index for index, head in enumerate(heads, start=1) if head == 0]
    if len(roots) > 1:
        raise ConllError(f"Sentence '{sent_id}' has multiple roots: tokens {roots}")

    for start in range(1, n + 1):
        node, steps = start, 0
        while node != 0:
            node = heads[node - 1]
            steps += 1
            if steps > n:
                raise ConllError(f"Sentence '{sent_id}': cycle detected through token {start}")


def _parse_block(lines: list[tuple[int, str]], path: Path) -> tuple[str, DependencyTree]:
    sent_id: Optional[str] = None
    heads: list[int] = []
    relations: list[str] = []
    first_line = lines[0][0]

    for line_number, line in lines:
        if line.startswith("#"):
            match = re.match(r"#\s*sent_id\s*=\s*(.+?)\s*$", line)
            if match:
                sent_id = match.group(1)
            continue

        columns = line.split("\t")
        if len(columns) < 8:
            raise ConllError(f"{path}:{line_number}: expected 10 tab-separated columns")

        token_id = columns[0]
        if "-" in token_id or "." in token_id:
            continue  # multiword tokens and empty nodes

        label = sent_id or f"<block at line {first_line}>"
        try:
            index = int(token_id)
            head = int(columns[6])
        except ValueError:
            raise ConllError(f"{path}:{line_number}: sentence '{label}' has a non-integer id or head")
        if index != len(heads) + 1:
            raise ConllError(f"{path}:{line_number}: sentence '{label}' token ids are not sequential")

        heads.append(head)
        relations.append(columns[7])

    if sent_id is None:
        raise ConllError(f"{path}:{first_line}: sentence block has no '# sent_id' comment")

    check_tree(heads, sent_id)
    return sent_id, DependencyTree(heads=tuple(heads), relations=tuple(relations))


def load_conllu(path: Path) -> dict[str, DependencyTree]:
    """
    Read dependency trees keyed by sent_id.

    Raises:
        ConllError: Malformed block, duplicate id, or invalid tree
    """
    path = Path(path)
    try:
        with open(path, 'r', encoding='utf-8') as f:
            raw_lines = f.read().splitlines()
    except FileNotFoundError:
        raise ConllError(f"File not found: {path}")

    blocks: list[list[tuple[int, str]]] = []
    current: list[tuple[int, str]] = []
    for line_number, line in enumerate(raw_lines, start=1):
        if line.strip():
            current.append((line_number, line.rstrip("\n")))
        elif current:
            blocks.append(current)
            current = []
    if current:
        blocks.append(current)

    trees: dict[str, DependencyTree] = {}
    for block in blocks:
        sent_id, tree = _parse_block(block, path)
        if sent_id in trees:
            raise ConllError(f"{path}: duplicate sent_id '{sent_id}'")
        trees[sent_id] = tree

    logger.info(f"Loaded {len(trees)} dependency trees from {path}")
    return trees


def filter_min_edits(
    corpus: list[SentencePair],
    extractor: Optional[Extractor] = None,
    n: int = 3,
) -> list[SentencePair]:
    """Keep the pairs whose edit set has at least ``n`` edits."""
    if n < 1:
        raise CorpusError(f"Minimum edit count must be >= 1, got {n}")
    extractor = extractor or extract_pair

    kept = [pair for pair in corpus if len(extractor(pair)) >= n]
    logger.info(f"Kept {len(kept)} of {len(corpus)} pairs with at least {n} edits")
    return kept


def corpus_stats(
    corpus: list[SentencePair],
    extractor: Optional[Extractor] = None,
) -> CorpusStats:
    """Sentence count, mean target length and mean edit count."""
    if not corpus:
        raise CorpusError("Cannot compute statistics of an empty corpus")
    extractor = extractor or extract_pair

    total_len = sum(len(pair.target) for pair in corpus)
    total_edits = sum(len(extractor(pair)) for pair in corpus)
    return CorpusStats(
        sentence_count=len(corpus),
        avg_len=total_len / len(corpus),
        avg_edits=total_edits / len(corpus),
    )
