"""Ranking quality metrics, report aggregation and annotator agreement."""

import logging
from collections import defaultdict
from pathlib import Path
from typing import Iterable, Optional, Sequence

from sklearn.metrics import cohen_kappa_score

from .config import EvalConfig
from .errors import DataError
from .jsonl import read_jsonl, write_jsonl
from .models import EditLabel, LabeledRanking, RankedOutput

logger = logging.getLogger(__name__)

COR = EditLabel.CORRECTED
REA = EditLabel.REASONABLE

LENGTH_BUCKETS = ((10, "<10"), (20, "10-19"), (30, "20-29"), (None, ">=30"))
DENSITY_BUCKETS = ((0.1, "<0.1"), (0.2, "0.1-0.2"), (0.3, "0.2-0.3"), (None, ">=0.3"))


class EvaluationError(DataError):
    """Labels and rankings cannot be aligned, or a metric is undefined."""

    pass


def s_bound(ranking: LabeledRanking) -> float:
    """
    Boundary accuracy: 1 - misplaced/k, where the ideal boundary sits after
    the first N_cor positions.
    """
    k = ranking.k
    if k == 0:
        raise EvaluationError("s_bound is undefined for an empty label list")
    n_cor = ranking.n_cor
    misplaced = sum(1 for label in ranking.labels[:n_cor] if label is REA)
    misplaced += sum(1 for label in ranking.labels[n_cor:] if label is COR)
    return 1.0 - misplaced / k


def s_rank(ranking: LabeledRanking, config: EvalConfig = EvalConfig()) -> float:
    """1 - (Rea-before-Cor inversions) / (N_cor * N_rea + epsilon)."""
    if ranking.k == 0:
        raise EvaluationError("s_rank is undefined for an empty label list")
    inversions = 0
    reasonable_seen = 0
    for label in ranking.labels:
        if label is REA:
            reasonable_seen += 1
        else:
            inversions += reasonable_seen
    return 1.0 - inversions / (ranking.n_cor * ranking.n_rea + config.epsilon)


def labels_in_rank_order(ranked: RankedOutput, labels: Sequence[EditLabel]) -> LabeledRanking:
    """
    Reorder per-edit labels (edit-set order) by predicted rank.

    Edits sharing a rank position keep their edit-set order.
    """
    if len(labels) != len(ranked.edit_rank):
        raise EvaluationError(
            f"Instance '{ranked.pair_id}' ({ranked.ranker}): {len(labels)} labels "
            f"for {len(ranked.edit_rank)} ranked edits"
        )
    order = sorted(range(len(labels)), key=lambda i: (ranked.edit_rank[i], i))
    return LabeledRanking(tuple(labels[i] for i in order))


def _bucket(value: float, buckets) -> str:
    for upper, name in buckets:
        if upper is None or value < upper:
            return name
    return buckets[-1][1]


def _summary(scores: list[tuple[float, float]]) -> dict:
    n = len(scores)
    return {
        "s_bound_mean": sum(b for b, _ in scores) / n if n else None,
        "s_rank_mean": sum(r for _, r in scores) / n if n else None,
        "n_instances": n,
    }


def evaluate(
    rankings: Iterable[RankedOutput],
    labels: dict[str, Sequence[EditLabel]],
    config: EvalConfig = EvalConfig(),
    target_lengths: Optional[dict[str, int]] = None,
) -> dict:
    """
    Score every ranking against its labels and macro-average per ranker.

    Instances without labels or without edits are excluded and counted.
    With ``target_lengths``, means are also broken down by target length
    and by edit density (edits per target token).

    Raises:
        EvaluationError: Label count differs from the ranked edit count
    """
    per_ranker: dict[str, list[tuple[float, float]]] = defaultdict(list)
    by_length: dict[str, dict[str, list]] = defaultdict(lambda: defaultdict(list))
    by_density: dict[str, dict[str, list]] = defaultdict(lambda: defaultdict(list))
    instances = []
    excluded: set[str] = set()

    for ranked in rankings:
        instance_labels = labels.get(ranked.pair_id)
        if instance_labels is None or len(ranked.edit_rank) == 0:
            excluded.add(ranked.pair_id)
            continue

        ordered = labels_in_rank_order(ranked, instance_labels)
        bound = s_bound(ordered)
        rank_score = s_rank(ordered, config)
        per_ranker[ranked.ranker].append((bound, rank_score))
        instances.append({
            "id": ranked.pair_id, "ranker": ranked.ranker, "s_bound": bound, "s_rank": rank_score,
        })

        if target_lengths and ranked.pair_id in target_lengths:
            length = target_lengths[ranked.pair_id]
            by_length[ranked.ranker][_bucket(length, LENGTH_BUCKETS)].append((bound, rank_score))
            density = ordered.k / length if length else float("inf")
            by_density[ranked.ranker][_bucket(density, DENSITY_BUCKETS)].append((bound, rank_score))

    if excluded:
        logger.warning(f"Excluded {len(excluded)} instances without labels or edits")

    report = {
        "per_ranker": {name: _summary(scores) for name, scores in sorted(per_ranker.items())},
        "excluded": len(excluded),
        "excluded_ids": sorted(excluded),
        "instances": instances,
    }
    if target_lengths:
        report["by_length"] = {
            name: {bucket: _summary(s) for bucket, s in sorted(buckets.items())}
            for name, buckets in sorted(by_length.items())
        }
        report["by_density"] = {
            name: {bucket: _summary(s) for bucket, s in sorted(buckets.items())}
            for name, buckets in sorted(by_density.items())
        }
    return report


def cohen_kappa(labels_a: Sequence[EditLabel], labels_b: Sequence[EditLabel]) -> float:
    """
    Two-class Cohen's kappa.

    When chance agreement is 1 (both annotators use one class only) the
    lists agree by construction and 1.0 is returned.

    Raises:
        EvaluationError: Length mismatch or empty lists
    """
    if len(labels_a) != len(labels_b):
        raise EvaluationError(f"Label lists differ in length: {len(labels_a)} vs {len(labels_b)}")
    if not labels_a:
        raise EvaluationError("Cohen's kappa needs at least one label")

    n = len(labels_a)
    p_a = sum(1 for label in labels_a if label is COR) / n
    p_b = sum(1 for label in labels_b if label is COR) / n
    p_e = p_a * p_b + (1 - p_a) * (1 - p_b)
    if p_e == 1.0:
        if list(labels_a) != list(labels_b):
            raise EvaluationError("Cohen's kappa is undefined: chance agreement is 1 with disagreement")
        return 1.0

    return float(cohen_kappa_score(
        [label.value for label in labels_a],
        [label.value for label in labels_b],
        labels=[COR.value, REA.value],
    ))


def load_labels(path: Path) -> dict[str, list[EditLabel]]:
    """Read {"id", "labels": [...]} lines; labels follow edit-set order."""
    labels: dict[str, list[EditLabel]] = {}
    for line_number, record in read_jsonl(Path(path)):
        try:
            pair_id = str(record["id"])
            values = record["labels"]
        except KeyError as e:
            raise EvaluationError(f"{path}:{line_number}: missing field {e}")
        if not isinstance(values, list):
            raise EvaluationError(f"{path}:{line_number}: 'labels' must be a list")
        try:
            labels[pair_id] = [EditLabel.parse(value) for value in values]
        except DataError as e:
            raise EvaluationError(f"{path}:{line_number}: {e}")
    return labels


def save_labels(path: Path, labels: dict[str, Sequence[EditLabel]]) -> int:
    return write_jsonl(path, (
        {"id": pair_id, "labels": [label.value for label in values]}
        for pair_id, values in labels.items()
    ))
