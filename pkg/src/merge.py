"""Per-sentence association graphs, edit grouping, and dependency-based merging."""

import logging
from itertools import combinations
from typing import Iterable, Optional, Protocol, Sequence

import networkx as nx
import numpy as np

from .config import DEFAULT_DISPLACY_LABELS, MergeConfig
from .embed import EmbeddingProvider, embed_many
from .errors import DataError
from .mining import item_key, key_text
from .models import DependencyTree, Edit, EditGroup, EditSet

logger = logging.getLogger(__name__)


class MergeError(DataError):
    """Edits cannot be placed in the dependency tree, or the model does not fit."""

    pass


class AssociationModel(Protocol):
    """Anything that scores pairs of embedding rows with a probability."""

    input_dim: int

    def predict_batch(self, W_i: np.ndarray, W_j: np.ndarray) -> np.ndarray: ...


def seq_distance(e_i: Edit, e_j: Edit) -> int:
    """Token gap between the target spans; touching or overlapping spans give 0."""
    (p_i, q_i), (p_j, q_j) = e_i.tgt_span, e_j.tgt_span
    return max(0, max(p_i, p_j) - min(q_i, q_j))


def tree_tokens(edit: Edit, tree: DependencyTree) -> list[int]:
    """
    Target-side token indices of an edit in the tree.

    Empty spans anchor at their position, clamped to the last token.
    """
    n = len(tree)
    p, q = edit.tgt_span
    if p == q:
        if p > n:
            raise MergeError(f"Edit anchor {p} is outside a tree of {n} tokens")
        return [min(p, n - 1)]
    if q > n:
        raise MergeError(f"Edit span {edit.tgt_span} is outside a tree of {n} tokens")
    return list(range(p, q))


def dep_distance(
    e_i: Edit, e_j: Edit, tree: DependencyTree, graph: Optional[nx.Graph] = None
) -> int:
    """Fewest tree hops between any token of one edit and any token of the other."""
    graph = graph if graph is not None else tree.to_graph()
    sources = tree_tokens(e_i, tree)
    targets = set(tree_tokens(e_j, tree))
    lengths = nx.multi_source_dijkstra_path_length(graph, set(sources))
    reachable = [lengths[t] for t in targets if t in lengths]
    if not reachable:
        raise MergeError("Edits are not connected in the dependency tree")
    return int(min(reachable))


def edit_label(edit: Edit) -> str:
    return f"{edit.src_text or '∅'} -> {edit.tgt_text or '∅'}"


def build_graph(
    edit_set: EditSet,
    model: AssociationModel,
    provider: EmbeddingProvider,
    config: MergeConfig,
    tree: Optional[DependencyTree] = None,
) -> nx.Graph:
    """
    Association graph over edit indices.

    Edge (i, j) with weight r iff r > tau, the target gap is at most
    delta_seq, and (when a tree is given) the tree distance is at most
    delta_dep. A missing tree is recorded in ``graph.graph["warnings"]``.
    """
    if model.input_dim != 3 * provider.dim + 1:
        raise MergeError(
            f"Model input dim {model.input_dim} does not match provider "
            f"{provider.provider_id} (dim {provider.dim})"
        )

    k = len(edit_set)
    graph = nx.Graph(id=edit_set.pair_id, warnings=[])
    for index, edit in enumerate(edit_set):
        graph.add_node(index, label=edit_label(edit), item=item_key(edit))

    if k < 2:
        return graph

    if tree is None:
        graph.graph["warnings"].append("no dependency parse; dependency constraint skipped")
        logger.debug(f"No dependency parse for '{edit_set.pair_id}', skipping dependency constraint")
    tree_graph = tree.to_graph() if tree is not None else None

    candidates = []
    for i, j in combinations(range(k), 2):
        if seq_distance(edit_set[i], edit_set[j]) > config.delta_seq:
            continue
        if tree is not None and dep_distance(edit_set[i], edit_set[j], tree, tree_graph) > config.delta_dep:
            continue
        candidates.append((i, j))

    if not candidates:
        return graph

    texts = [key_text(item_key(edit)) for edit in edit_set]
    vectors = embed_many(provider, texts)
    W_i = np.array([vectors[texts[i]] for i, _ in candidates])
    W_j = np.array([vectors[texts[j]] for _, j in candidates])
    probabilities = model.predict_batch(W_i, W_j)

    for (i, j), r in zip(candidates, probabilities):
        if r > config.tau:
            graph.add_edge(i, j, weight=float(r))

    return graph


def connected_components(graph: nx.Graph, k: int) -> list[EditGroup]:
    """Groups partitioning 0..k-1, ordered by smallest member."""
    full = nx.Graph()
    full.add_nodes_from(range(k))
    full.add_edges_from((u, v) for u, v in graph.edges() if u < k and v < k)
    groups = [EditGroup(tuple(component)) for component in nx.connected_components(full)]
    return sorted(groups, key=lambda g: g.first)


def singleton_groups(k: int) -> list[EditGroup]:
    return [EditGroup((index,)) for index in range(k)]


def displacy_merge(
    edit_set: EditSet,
    tree: DependencyTree,
    label_set: Iterable[str] = DEFAULT_DISPLACY_LABELS,
) -> list[EditGroup]:
    """
    Merge edits joined by a direct head-dependent link whose dependent
    carries a label from ``label_set`` (exact match).
    """
    labels = set(label_set)
    k = len(edit_set)
    tokens = [set(tree_tokens(edit, tree)) for edit in edit_set]

    links = nx.Graph()
    links.add_nodes_from(range(k))
    for i, j in combinations(range(k), 2):
        for child_side, head_side in ((i, j), (j, i)):
            if any(
                tree.head_of(child) in tokens[head_side] and tree.relations[child] in labels
                for child in tokens[child_side]
            ):
                links.add_edge(i, j)
                break

    return connected_components(links, k)


def _dot_quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def graph_to_dot(graph: nx.Graph) -> str:
    """DOT rendering: nodes labeled with edit texts, edges with r to 3 decimals."""
    lines = [f"graph {_dot_quote(str(graph.graph.get('id', 'edits')))} {{"]
    for node in sorted(graph.nodes):
        label = graph.nodes[node].get("label", str(node))
        lines.append(f"  {node} [label={_dot_quote(label)}];")
    for u, v in sorted(tuple(sorted(edge)) for edge in graph.edges()):
        lines.append(f"  {u} -- {v} [label=\"{graph.edges[u, v]['weight']:.3f}\"];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def top_associations(
    items: Sequence[str],
    model: AssociationModel,
    provider: EmbeddingProvider,
    n: int = 50,
    focus: Optional[str] = None,
) -> list[tuple[str, str, float]]:
    """
    Highest-probability item pairs across a vocabulary of items.

    With ``focus``, only pairs containing that item are considered.
    """
    unique = sorted(set(items))
    if focus is not None:
        if focus not in unique:
            raise MergeError(f"Focus item '{focus}' is not among the candidate items")
        pairs = [(min(focus, other), max(focus, other)) for other in unique if other != focus]
    else:
        pairs = list(combinations(unique, 2))
    if not pairs:
        return []

    vectors = embed_many(provider, [key_text(item) for item in unique])
    W_i = np.array([vectors[key_text(a)] for a, _ in pairs])
    W_j = np.array([vectors[key_text(b)] for _, b in pairs])
    probabilities = model.predict_batch(W_i, W_j)

    ranked = sorted(
        ((a, b, float(r)) for (a, b), r in zip(pairs, probabilities)),
        key=lambda t: (-t[2], t[0], t[1]),
    )
    return ranked[:n]


def associations_to_dot(associations: Sequence[tuple[str, str, float]], name: str = "associations") -> str:
    """DOT rendering of corpus-level item associations."""
    lines = [f"graph {_dot_quote(name)} {{"]
    for a, b, r in associations:
        lines.append(f"  {_dot_quote(a)} -- {_dot_quote(b)} [label=\"{r:.3f}\"];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def merge_record(
    pair_id: str,
    groups: Sequence[EditGroup],
    warnings: Sequence[str],
    displacy_groups: Optional[Sequence[EditGroup]] = None,
) -> dict:
    """Merge output line {"id", "groups", "warnings"[, "displacy_groups"]}."""
    record = {
        "id": pair_id,
        "groups": [list(group.members) for group in groups],
        "warnings": list(warnings),
    }
    if displacy_groups is not None:
        record["displacy_groups"] = [list(group.members) for group in displacy_groups]
    return record
