"""Tests for data models."""

import pytest

from src.errors import DataError
from src.models import (
    DependencyTree,
    Edit,
    EditGroup,
    EditLabel,
    EditOp,
    EditSet,
    LabeledPair,
    LabeledRanking,
    RankedOutput,
    Sentence,
)


def test_sentence_text_joins_by_language():
    """Test Chinese joins without spaces."""
    assert Sentence(("I", "am", "."), "en").text == "I am ."
    assert Sentence(("我", "很", "好"), "zh").text == "我很好"


def test_edit_invariants():
    """Test operation and span consistency is enforced."""
    Edit(EditOp.INSERT, (1, 1), (1, 2), (), ("to",))
    Edit(EditOp.DELETE, (1, 2), (1, 1), ("the",), ())
    Edit(EditOp.SUBSTITUTE, (2, 3), (2, 3), ("go",), ("goes",))

    with pytest.raises(DataError):
        Edit(EditOp.INSERT, (1, 2), (1, 2), ("a",), ("b",))
    with pytest.raises(DataError):
        Edit(EditOp.DELETE, (1, 1), (1, 2), (), ("b",))
    with pytest.raises(DataError):
        Edit(EditOp.SUBSTITUTE, (1, 1), (1, 2), (), ("b",))


def test_edit_tokens_must_match_spans():
    """Test token tuples have the span lengths."""
    with pytest.raises(DataError, match="do not match"):
        Edit(EditOp.SUBSTITUTE, (0, 2), (0, 1), ("a",), ("b",))


def test_edit_from_dict_splits_by_language():
    """Test edit texts split back into tokens per language."""
    edit = Edit.from_dict(
        {"op": "substitute", "src_span": [0, 2], "tgt_span": [0, 2], "src_text": "我们", "tgt_text": "他们"},
        language="zh",
    )

    assert edit.src_tokens == ("我", "们")
    assert edit.to_dict()["tgt_text"] == "他们"


def test_edit_from_dict_malformed():
    """Test malformed records raise DataError."""
    with pytest.raises(DataError, match="Malformed"):
        Edit.from_dict({"op": "swap", "src_span": [0, 1], "tgt_span": [0, 1], "src_text": "a", "tgt_text": "b"})


def test_edit_group_sorts_members():
    """Test group members are stored sorted."""
    group = EditGroup((3, 1, 2))

    assert group.members == (1, 2, 3)
    assert group.first == 1
    assert len(group) == 3


def test_edit_group_cannot_be_empty():
    """Test empty groups are rejected."""
    with pytest.raises(DataError):
        EditGroup(())


def test_edit_label_parse():
    """Test labels parse regardless of case and whitespace."""
    assert EditLabel.parse(" Corrected\n") is EditLabel.CORRECTED
    assert EditLabel.parse("REASONABLE") is EditLabel.REASONABLE

    with pytest.raises(DataError, match="maybe"):
        EditLabel.parse("maybe")


def test_labeled_pair_validation():
    """Test labeled pairs need distinct items and a binary label."""
    with pytest.raises(DataError):
        LabeledPair("~look", "~look", 1)
    with pytest.raises(DataError):
        LabeledPair("~look", "+for", 2)


def test_labeled_ranking_counts():
    """Test class counts of a labeled ranking."""
    ranking = LabeledRanking((EditLabel.CORRECTED, EditLabel.REASONABLE, EditLabel.CORRECTED))

    assert ranking.k == 3
    assert ranking.n_cor == 2
    assert ranking.n_rea == 1


def test_dependency_tree_navigation():
    """Test root, heads and the undirected graph."""
    tree = DependencyTree(heads=(2, 0, 2), relations=("nsubj", "ROOT", "obj"))

    assert tree.root == 1
    assert tree.head_of(0) == 1
    assert tree.head_of(1) is None

    graph = tree.to_graph()
    assert set(graph.edges()) == {(0, 1), (1, 2)}
    assert graph.edges[0, 1]["relation"] == "nsubj"


def test_ranked_output_from_order():
    """Test group members share their group's position."""
    ranked = RankedOutput.from_order(
        "s1", "ours", [(EditGroup((1, 2)), 5.0), (EditGroup((0,)), 1.0)], k=3
    )

    assert ranked.edit_rank == (2, 1, 1)
    assert ranked.groups == [EditGroup((1, 2)), EditGroup((0,))]


def test_ranked_output_must_cover_all_edits():
    """Test rankings that skip an edit are rejected."""
    with pytest.raises(DataError, match="does not cover"):
        RankedOutput.from_order("s1", "ours", [(EditGroup((0,)), None)], k=2)


def test_ranked_output_dict_round_trip():
    """Test rankings survive serialization, curve included."""
    ranked = RankedOutput.from_order("s1", "random", [(EditGroup((1,)), None), (EditGroup((0,)), None)], k=2)
    ranked = RankedOutput(ranked.pair_id, ranked.ranker, ranked.ordered_groups, ranked.edit_rank, (3.0, 2.0, 1.0))

    restored = RankedOutput.from_dict(ranked.to_dict())

    assert restored == ranked


def test_edit_set_sequence_protocol():
    """Test edit sets index and iterate like sequences."""
    edit = Edit(EditOp.DELETE, (0, 1), (0, 0), ("the",), ())
    edit_set = EditSet("s1", (edit,))

    assert len(edit_set) == 1
    assert edit_set[0] is edit
    assert list(edit_set) == [edit]
    assert edit_set.to_dict()["edits"][0]["op"] == "delete"
