"""Pytest fixtures for testing."""

import tempfile
from pathlib import Path

import numpy as np
import pytest

from src.config import RemoteConfig
from src.corpus import make_pair
from src.edits import extract_pair
from src.embed import HashEmbeddingProvider
from src.models import DependencyTree
from src.scorers import StubScorer


@pytest.fixture
def temp_dir():
    """Create temporary directory for tests."""
    with tempfile.TemporaryDirectory() as tmpdir:
        yield Path(tmpdir)


# Sentence pairs with hand-assigned disfluency tables

TENSE_LEX_SCORES = {
    "I have finish my task .": 1391.3,
    "I have finish my homework .": 1165.1,
    "I have finished my task .": 224.9,
    "I have finished my homework .": 180.5,
}

SEPARABLE_VERB_SCORES = {
    "Er fang die Arbeit am .": 1312.5,
    "Er fängt die Arbeit am .": 155.1,
    "Er fang die Arbeit an .": 1736.0,
    "Er fängt die Arbeit an .": 112.8,
}


@pytest.fixture
def tense_lex_pair():
    """Two independent substitutions: a tense fix and a lexical choice."""
    return make_pair("tense-lex", "I have finish my task.", "I have finished my homework.", "en")


@pytest.fixture
def tense_lex_edits(tense_lex_pair):
    return extract_pair(tense_lex_pair)


@pytest.fixture
def tense_lex_scorer():
    return StubScorer(TENSE_LEX_SCORES, scorer_id="stub-tense-lex")


@pytest.fixture
def separable_verb_pair():
    """German separable verb: stem and particle only help together."""
    return make_pair("separable", "Er fang die Arbeit am.", "Er fängt die Arbeit an.", "de")


@pytest.fixture
def separable_verb_edits(separable_verb_pair):
    return extract_pair(separable_verb_pair)


@pytest.fixture
def separable_verb_scorer():
    return StubScorer(SEPARABLE_VERB_SCORES, scorer_id="stub-separable")


@pytest.fixture
def separable_verb_tree():
    """Parse of 'Er fängt die Arbeit an .'"""
    return DependencyTree(
        heads=(2, 0, 4, 2, 2, 2),
        relations=("nsubj", "ROOT", "det", "obj", "compound:prt", "punct"),
    )


# "look ... for" split across clauses, three tree hops apart

@pytest.fixture
def look_for_pair():
    return make_pair(
        "look-for",
        "If you see at the map, the reason of this path is clear.",
        "If you look at the map, the reason for this path is clear.",
        "en",
    )


@pytest.fixture
def look_for_edits(look_for_pair):
    return extract_pair(look_for_pair)


@pytest.fixture
def look_for_tree():
    """Parse of the target: look <- is -> reason -> for."""
    return DependencyTree(
        heads=(3, 3, 13, 3, 6, 4, 13, 9, 13, 9, 12, 10, 0, 13, 13),
        relations=(
            "mark", "nsubj", "advcl", "prep", "det", "pobj", "punct",
            "det", "nsubj", "prep", "det", "pobj", "ROOT", "acomp", "punct",
        ),
    )


@pytest.fixture
def look_for_conllu(temp_dir, look_for_pair, look_for_tree):
    """CoNLL-U file holding the look-for parse."""
    lines = ["# sent_id = look-for", f"# text = {look_for_pair.target.raw}"]
    for index, token in enumerate(look_for_pair.target.tokens):
        lines.append("\t".join([
            str(index + 1), token, token.lower(), "_", "_", "_",
            str(look_for_tree.heads[index]), look_for_tree.relations[index], "_", "_",
        ]))
    path = temp_dir / "parses.conllu"
    path.write_text("\n".join(lines) + "\n\n", encoding="utf-8")
    return path


# Embeddings and association models

@pytest.fixture
def hash_provider():
    return HashEmbeddingProvider(dim=8, seed=0)


class ConstantModel:
    """Association model that scores every pair with the same probability."""

    def __init__(self, probability: float, dim: int = 8):
        self.probability = probability
        self.input_dim = 3 * dim + 1
        self.calls = 0

    def predict_batch(self, W_i, W_j):
        self.calls += 1
        return np.full(len(W_i), self.probability)


@pytest.fixture
def constant_model():
    """Factory for fixed-probability association models."""
    return ConstantModel


@pytest.fixture
def remote_config():
    """Remote backend configuration pointing at a mocked host."""
    return RemoteConfig(
        base_url="http://backend.test",
        embedding_model="embed-small",
        scoring_model="lm-base",
        judge_model="judge-chat",
        max_retries=2,
        backoff_base=0.01,
        batch_size=2,
    )
