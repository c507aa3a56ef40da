"""Tests for ranking metrics, reports and annotator agreement."""

import json
from itertools import combinations, product

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.evaluation import (
    EvaluationError,
    cohen_kappa,
    evaluate,
    labels_in_rank_order,
    load_labels,
    s_bound,
    s_rank,
    save_labels,
)
from src.models import EditGroup, EditLabel, LabeledRanking, RankedOutput

C = EditLabel.CORRECTED
R = EditLabel.REASONABLE


def ranked(pair_id, ranker, edit_rank):
    """RankedOutput with singleton groups in the given per-edit rank."""
    order = sorted(range(len(edit_rank)), key=lambda i: edit_rank[i])
    return RankedOutput.from_order(pair_id, ranker, [(EditGroup((i,)), None) for i in order], len(edit_rank))


@pytest.mark.unit
def test_s_bound_by_hand():
    """Test one misplaced label on each side of the boundary."""
    assert s_bound(LabeledRanking((R, C, C))) == pytest.approx(1 / 3)
    assert s_bound(LabeledRanking((C, C, R))) == 1.0


@pytest.mark.unit
def test_s_rank_by_hand():
    """Test one inversion out of two ordered pairs."""
    assert s_rank(LabeledRanking((C, R, C))) == pytest.approx(0.5)
    assert s_rank(LabeledRanking((R, R, C))) == pytest.approx(0.0)


@pytest.mark.unit
def test_single_class_rankings_are_perfect():
    """Test rankings with only one label class score 1."""
    assert s_rank(LabeledRanking((C, C, C))) == pytest.approx(1.0)
    assert s_rank(LabeledRanking((R, R))) == pytest.approx(1.0)
    assert s_bound(LabeledRanking((R, R))) == 1.0


@pytest.mark.unit
def test_empty_ranking_is_undefined():
    """Test metrics reject empty label lists."""
    with pytest.raises(EvaluationError):
        s_rank(LabeledRanking(()))
    with pytest.raises(EvaluationError):
        s_bound(LabeledRanking(()))


@settings(max_examples=200, deadline=None)
@given(labels=st.lists(st.sampled_from([C, R]), min_size=1, max_size=12))
def test_s_rank_matches_pairwise_count(labels):
    """Property: s_rank equals one minus the brute-force inversion fraction."""
    ranking = LabeledRanking(tuple(labels))
    inversions = sum(
        1
        for i in range(len(labels))
        for j in range(i + 1, len(labels))
        if labels[i] is R and labels[j] is C
    )
    expected = 1.0 - inversions / (ranking.n_cor * ranking.n_rea + 1e-9)

    assert s_rank(ranking) == pytest.approx(expected)
    assert 0.0 <= s_bound(ranking) <= 1.0


@pytest.mark.unit
@pytest.mark.parametrize("k", range(1, 9))
def test_metrics_match_brute_force_for_every_sequence(k):
    """Test both metrics on all 2^k label sequences against direct evaluation."""
    for labels in product([C, R], repeat=k):
        ranking = LabeledRanking(labels)
        n_cor = labels.count(C)
        n_rea = k - n_cor
        ideal = (C,) * n_cor + (R,) * n_rea
        misplaced = sum(1 for label, wanted in zip(labels, ideal) if label is not wanted)
        inversions = sum(1 for a, b in combinations(labels, 2) if a is R and b is C)

        assert s_bound(ranking) == pytest.approx(1.0 - misplaced / k, abs=1e-12)
        assert s_rank(ranking) == pytest.approx(1.0 - inversions / (n_cor * n_rea + 1e-9), abs=1e-12)

        if n_cor and n_rea:
            perfect = inversions == 0
            assert (s_bound(ranking) == 1.0) is perfect
            assert (s_rank(ranking) == 1.0) is perfect


@pytest.mark.unit
def test_labels_in_rank_order():
    """Test labels are read in rank order with ties kept in edit order."""
    output = RankedOutput.from_order("p", "ours", [(EditGroup((2,)), 1.0), (EditGroup((0, 1)), 0.5)], 3)

    assert labels_in_rank_order(output, [R, C, C]).labels == (C, R, C)

    with pytest.raises(EvaluationError, match="2 labels for 3 ranked edits"):
        labels_in_rank_order(output, [R, C])


@pytest.mark.unit
def test_evaluate_report():
    """Test macro averages per ranker and excluded instances."""
    labels = {"a": [C, R], "b": [R, C, C]}
    rankings = [
        ranked("a", "ours", [1, 2]),
        ranked("b", "ours", [3, 1, 2]),
        ranked("a", "random", [2, 1]),
        ranked("b", "random", [2, 1, 3]),
        ranked("unlabeled", "ours", [1]),
    ]

    report = evaluate(rankings, labels)

    assert set(report["per_ranker"]) == {"ours", "random"}
    assert report["per_ranker"]["ours"]["s_rank_mean"] == pytest.approx(1.0)
    assert report["per_ranker"]["random"]["s_rank_mean"] == pytest.approx(0.25)
    assert report["per_ranker"]["ours"]["n_instances"] == 2
    assert report["excluded"] == 1
    assert report["excluded_ids"] == ["unlabeled"]
    assert len(report["instances"]) == 4
    assert "by_length" not in report


@pytest.mark.unit
def test_evaluate_excludes_empty_edit_sets():
    """Test instances with no edits are excluded."""
    report = evaluate([RankedOutput("empty", "ours", (), ())], {"empty": []})

    assert report["excluded_ids"] == ["empty"]
    assert report["per_ranker"] == {}


@pytest.mark.unit
def test_evaluate_breakdowns():
    """Test length and density buckets are filled from target lengths."""
    report = evaluate([ranked("a", "ours", [1, 2])], {"a": [C, R]}, target_lengths={"a": 12})

    assert report["by_length"]["ours"]["10-19"]["n_instances"] == 1
    assert report["by_density"]["ours"]["0.1-0.2"]["s_rank_mean"] == pytest.approx(1.0)


@pytest.mark.unit
def test_cohen_kappa():
    """Test chance-level and perfectly opposed annotators."""
    assert cohen_kappa([C, C, R, R], [C, R, C, R]) == pytest.approx(0.0)
    assert cohen_kappa([C, C, R, R], [R, R, C, C]) == pytest.approx(-1.0)
    assert cohen_kappa([C, R], [C, R]) == pytest.approx(1.0)


@pytest.mark.unit
def test_cohen_kappa_degenerate():
    """Test single-class agreement and invalid inputs."""
    assert cohen_kappa([C, C], [C, C]) == 1.0

    with pytest.raises(EvaluationError, match="differ in length"):
        cohen_kappa([C], [C, R])
    with pytest.raises(EvaluationError):
        cohen_kappa([], [])


@pytest.mark.unit
def test_labels_file(temp_dir):
    """Test label files are parsed leniently and errors carry line numbers."""
    path = temp_dir / "labels.jsonl"
    save_labels(path, {"a": [C, R]})
    with open(path, "a") as f:
        f.write(json.dumps({"id": "b", "labels": [" Corrected ", "REASONABLE"]}) + "\n")

    assert load_labels(path) == {"a": [C, R], "b": [C, R]}

    bad = temp_dir / "bad.jsonl"
    bad.write_text(json.dumps({"id": "a", "labels": ["maybe"]}) + "\n")
    with pytest.raises(EvaluationError, match=":1:"):
        load_labels(bad)

    missing = temp_dir / "missing.jsonl"
    missing.write_text(json.dumps({"labels": []}) + "\n")
    with pytest.raises(EvaluationError, match="missing field"):
        load_labels(missing)
