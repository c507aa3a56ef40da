"""Atomic edit extraction by token alignment, and hypothesis realization."""

import logging
from pathlib import Path
from typing import Iterable, Sequence

from .errors import DataError
from .jsonl import read_jsonl, write_jsonl
from .models import Edit, EditOp, EditSet, Sentence, SentencePair, joiner

logger = logging.getLogger(__name__)

MATCH = "match"
SUBSTITUTE = "substitute"
DELETE = "delete"
INSERT = "insert"


class EditError(DataError):
    """Edits cannot be extracted or applied."""

    pass


def _distance_table(src: Sequence[str], tgt: Sequence[str]) -> list[list[int]]:
    """Unit-cost Levenshtein table over tokens."""
    n, m = len(src), len(tgt)
    d = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        d[i][0] = i
    for j in range(m + 1):
        d[0][j] = j
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            cost = 0 if src[i - 1] == tgt[j - 1] else 1
            d[i][j] = min(d[i - 1][j - 1] + cost, d[i - 1][j] + 1, d[i][j - 1] + 1)
    return d


def align(src: Sequence[str], tgt: Sequence[str]) -> list[str]:
    """
    Minimum-cost alignment as a list of operations from left to right.

    The backtrace runs from the end and prefers
    match > substitute > delete > insert whenever costs tie.
    """
    d = _distance_table(src, tgt)
    i, j = len(src), len(tgt)
    ops: list[str] = []
    while i > 0 or j > 0:
        if i > 0 and j > 0 and src[i - 1] == tgt[j - 1] and d[i][j] == d[i - 1][j - 1]:
            ops.append(MATCH)
            i, j = i - 1, j - 1
        elif i > 0 and j > 0 and d[i][j] == d[i - 1][j - 1] + 1:
            ops.append(SUBSTITUTE)
            i, j = i - 1, j - 1
        elif i > 0 and d[i][j] == d[i - 1][j] + 1:
            ops.append(DELETE)
            i -= 1
        else:
            ops.append(INSERT)
            j -= 1
    ops.reverse()
    return ops


def extract_edits(source: Sentence, target: Sentence, pair_id: str = "") -> EditSet:
    """
    Extract atomic edits: maximal runs of non-match alignment operations.

    Applying every returned edit to ``source`` reproduces ``target``.
    """
    if source.language != target.language:
        raise EditError(
            f"Pair '{pair_id}': source language '{source.language}' "
            f"differs from target language '{target.language}'"
        )

    src, tgt = source.tokens, target.tokens
    edits: list[Edit] = []
    i = j = 0
    run_start = None

    def close_run(i_end: int, j_end: int) -> None:
        i0, j0 = run_start
        if i0 == i_end:
            op = EditOp.INSERT
        elif j0 == j_end:
            op = EditOp.DELETE
        else:
            op = EditOp.SUBSTITUTE
        edits.append(Edit(
            op=op,
            src_span=(i0, i_end),
            tgt_span=(j0, j_end),
            src_tokens=tuple(src[i0:i_end]),
            tgt_tokens=tuple(tgt[j0:j_end]),
            language=source.language,
        ))

    for op in align(src, tgt):
        if op == MATCH:
            if run_start is not None:
                close_run(i, j)
                run_start = None
            i, j = i + 1, j + 1
            continue

        if run_start is None:
            run_start = (i, j)
        if op == SUBSTITUTE:
            i, j = i + 1, j + 1
        elif op == DELETE:
            i += 1
        else:
            j += 1

    if run_start is not None:
        close_run(i, j)

    return EditSet(pair_id=pair_id, edits=tuple(edits), language=source.language)


def extract_pair(pair: SentencePair) -> EditSet:
    """Edits of a sentence pair."""
    return extract_edits(pair.source, pair.target, pair.id)


def apply_edits(source: Sentence, subset: Iterable[Edit]) -> Sentence:
    """
    Realize ``source`` with a subset of its edits applied.

    Raises:
        EditError: Span beyond the source, token mismatch, or overlapping edits
    """
    ordered = sorted(subset, key=lambda e: (e.src_span[0], e.tgt_span[0]))
    n = len(source.tokens)

    for edit in ordered:
        i, j = edit.src_span
        if j > n:
            raise EditError(f"Edit span {edit.src_span} exceeds source length {n}")
        if tuple(source.tokens[i:j]) != edit.src_tokens:
            raise EditError(f"Edit span {edit.src_span} does not match the source tokens")

    for previous, current in zip(ordered, ordered[1:]):
        if current.src_span[0] < previous.src_span[1] or current.src_span[0] == previous.src_span[0]:
            raise EditError(
                f"Overlapping edits at source spans {previous.src_span} and {current.src_span}"
            )

    tokens = list(source.tokens)
    for edit in reversed(ordered):
        i, j = edit.src_span
        tokens[i:j] = edit.tgt_tokens

    return Sentence(
        tokens=tuple(tokens),
        language=source.language,
        raw=joiner(source.language).join(tokens),
    )


def apply_indices(source: Sentence, edit_set: EditSet, indices: Iterable[int]) -> Sentence:
    """Apply the edits at the given indices of an edit set."""
    return apply_edits(source, [edit_set[index] for index in sorted(set(indices))])


def leave_one_out(source: Sentence, edit_set: EditSet, edit: Edit) -> Sentence:
    """Apply every edit of the set except ``edit``."""
    if edit not in edit_set.edits:
        raise EditError(f"Edit {edit.src_span} -> {edit.tgt_span} is not part of set '{edit_set.pair_id}'")
    return apply_edits(source, [other for other in edit_set.edits if other != edit])


def save_edit_sets(path: Path, edit_sets: Iterable[EditSet]) -> int:
    """Write edit sets as JSON Lines {"id", "edits": [...]}."""
    return write_jsonl(path, (edit_set.to_dict() for edit_set in edit_sets))


def load_edit_sets(path: Path, languages: dict[str, str] | None = None) -> list[EditSet]:
    """
    Read edit sets written by save_edit_sets.

    The record's "lang" decides how edit texts split back into tokens.
    ``languages`` (pair id -> tag) covers records written without one.

    Raises:
        EditError: Malformed record, or no language for a record
    """
    languages = languages or {}
    edit_sets = []
    for line_number, record in read_jsonl(Path(path)):
        try:
            pair_id = str(record["id"])
            raw_edits = record["edits"]
        except KeyError as e:
            raise EditError(f"{path}:{line_number}: missing field {e}")
        language = record.get("lang") or languages.get(pair_id)
        if not language:
            raise EditError(f"{path}:{line_number}: no language for edit set '{pair_id}'")
        if pair_id in languages and languages[pair_id] != language:
            raise EditError(
                f"{path}:{line_number}: edit set '{pair_id}' is '{language}' "
                f"but its pair is '{languages[pair_id]}'"
            )
        try:
            edits = tuple(Edit.from_dict(item, language) for item in raw_edits)
        except DataError as e:
            raise EditError(f"{path}:{line_number}: {e}")
        edit_sets.append(EditSet(pair_id=pair_id, edits=edits, language=language))
    return edit_sets
