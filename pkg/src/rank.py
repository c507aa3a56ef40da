"""Marginal-fluency ranking of edit groups and the baseline rankers."""

import dataclasses
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Sequence

from .edits import apply_edits, apply_indices
from .errors import DataError
from .merge import singleton_groups
from .metrics import scorer_calls_total
from .models import EditGroup, EditSet, RankedOutput, Sentence
from .scorers import FluencyScorer
from .seeds import substream

logger = logging.getLogger(__name__)


class RankingError(DataError):
    """Groups do not partition the edit set."""

    pass


class _Memo:
    """Per-call memo of sentence scores; safe across worker threads."""

    def __init__(self, scorer: FluencyScorer):
        self.scorer = scorer
        self._scores: dict[tuple[str, ...], float] = {}
        self._lock = threading.Lock()

    def __call__(self, sentence: Sentence) -> float:
        with self._lock:
            if sentence.tokens in self._scores:
                return self._scores[sentence.tokens]
        value = float(self.scorer.disfluency(sentence))
        scorer_calls_total.labels(scorer=getattr(self.scorer, "scorer_id", "unknown")).inc()
        with self._lock:
            self._scores[sentence.tokens] = value
        return value


def check_partition(groups: Sequence[EditGroup], k: int) -> None:
    members = sorted(m for group in groups for m in group.members)
    if members != list(range(k)):
        raise RankingError(f"Groups {[g.members for g in groups]} do not partition {k} edits")


def delta_leave_one_out(
    scorer: FluencyScorer, source: Sentence, edit_set: EditSet, group: EditGroup
) -> float:
    """disfluency(all edits but the group) - disfluency(all edits)."""
    k = len(edit_set)
    if any(m < 0 or m >= k for m in group.members):
        raise RankingError(f"Group {group.members} is not a subset of {k} edits")
    full = apply_edits(source, edit_set.edits)
    without = apply_indices(source, edit_set, [i for i in range(k) if i not in group.members])
    return scorer.disfluency(without) - scorer.disfluency(full)


def _tie_key(group: EditGroup, edit_set: EditSet) -> tuple[int, int, int]:
    return (edit_set[group.first].src_span[0], len(group), group.first)


def rank_ours(
    scorer: FluencyScorer,
    source: Sentence,
    edit_set: EditSet,
    groups: Sequence[EditGroup],
    ranker: str = "ours",
    max_workers: int = 1,
) -> RankedOutput:
    """
    Forward greedy ranking.

    Starting from the source, each step applies the remaining group whose
    application lowers disfluency the most; ties go to the earliest source
    position, then the smaller group.
    """
    k = len(edit_set)
    check_partition(groups, k)
    score = _Memo(scorer)

    applied: set[int] = set()
    remaining = list(groups)
    current_score = score(source)
    ordered: list[tuple[EditGroup, Optional[float]]] = []

    executor = ThreadPoolExecutor(max_workers=max_workers) if max_workers > 1 and len(groups) > 1 else None
    try:
        while remaining:
            hypotheses = [apply_indices(source, edit_set, applied | set(g.members)) for g in remaining]
            if executor is not None:
                scores = list(executor.map(score, hypotheses))
            else:
                scores = [score(h) for h in hypotheses]

            best = min(
                range(len(remaining)),
                key=lambda i: (-(current_score - scores[i]), *_tie_key(remaining[i], edit_set)),
            )
            group = remaining.pop(best)
            ordered.append((group, current_score - scores[best]))
            applied |= set(group.members)
            current_score = scores[best]
    finally:
        if executor is not None:
            executor.shutdown()

    return RankedOutput.from_order(edit_set.pair_id, ranker, ordered, k)


def rank_vanilla(scorer: FluencyScorer, source: Sentence, edit_set: EditSet) -> RankedOutput:
    """Single pass: each edit's leave-one-out delta against the full correction."""
    k = len(edit_set)
    score = _Memo(scorer)
    full_score = score(apply_edits(source, edit_set.edits)) if k else 0.0

    scored = []
    for group in singleton_groups(k):
        others = [i for i in range(k) if i != group.first]
        delta = score(apply_indices(source, edit_set, others)) - full_score
        scored.append((group, delta))

    scored.sort(key=lambda item: (-item[1], *_tie_key(item[0], edit_set)))
    return RankedOutput.from_order(edit_set.pair_id, "vanilla", scored, k)


def rank_greedy(
    scorer: FluencyScorer, source: Sentence, edit_set: EditSet, max_workers: int = 1
) -> RankedOutput:
    """Forward greedy over atomic edits."""
    return rank_ours(
        scorer, source, edit_set, singleton_groups(len(edit_set)),
        ranker="greedy", max_workers=max_workers,
    )


def rank_random(
    edit_set: EditSet,
    seed: int,
    groups: Optional[Sequence[EditGroup]] = None,
    ranker: str = "random",
) -> RankedOutput:
    """
    Seeded uniform permutation of the groups (atomic edits by default).

    Each pair id draws from its own substream, so results do not depend on
    corpus order.
    """
    k = len(edit_set)
    groups = list(groups) if groups is not None else singleton_groups(k)
    check_partition(groups, k)
    rng = substream(seed, f"{ranker}:{edit_set.pair_id}")
    order = rng.permutation(len(groups))
    return RankedOutput.from_order(
        edit_set.pair_id, ranker, [(groups[i], None) for i in order], k
    )


def fluency_curve(
    scorer: FluencyScorer, source: Sentence, edit_set: EditSet, ranked: RankedOutput
) -> list[float]:
    """Disfluency after each successive group application; index 0 is the source."""
    score = _Memo(scorer)
    applied: set[int] = set()
    curve = [score(source)]
    for group in ranked.groups:
        applied |= set(group.members)
        curve.append(score(apply_indices(source, edit_set, applied)))
    return curve


def with_curve(
    scorer: FluencyScorer, source: Sentence, edit_set: EditSet, ranked: RankedOutput
) -> RankedOutput:
    """Attach the fluency curve to a ranking."""
    curve = fluency_curve(scorer, source, edit_set, ranked)
    return dataclasses.replace(ranked, curve=tuple(curve))
