"""Structural backbones: category co-occurrence graph, per-outfit subgraphs,
outfit hypergraph, and the key/mediator conversion of hyperedges."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .data import Item, Outfit
from .errors import StructureError


def _pair(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


@dataclass
class CategoryGraph:
    """Categories as nodes, weighted by co-occurrence counts in outfits."""

    nodes: frozenset[int]
    cooccurrence: dict[tuple[int, int], int]

    def count(self, a: int, b: int) -> int:
        return self.cooccurrence.get(_pair(a, b), 0)

    def has_edge(self, a: int, b: int) -> bool:
        return _pair(a, b) in self.cooccurrence


def build_cooccurrence_graph(
    outfits: list[Outfit], item_table: dict[str, Item]
) -> CategoryGraph:
    """Every unordered pair of distinct categories inside one outfit counts once."""
    counts: Counter = Counter()
    nodes: set[int] = set()
    for outfit in outfits:
        cats = sorted({item_table[i].category_id for i in outfit.items})
        nodes.update(cats)
        for idx, a in enumerate(cats):
            for b in cats[idx + 1 :]:
                counts[(a, b)] += 1
    return CategoryGraph(frozenset(nodes), dict(counts))


def write_edge_list(graph: CategoryGraph, path) -> None:
    """Dump ``cat_a<TAB>cat_b<TAB>count`` lines in deterministic order."""
    with open(path, "w", encoding="utf-8") as fh:
        for (a, b) in sorted(graph.cooccurrence):
            fh.write(f"{a}\t{b}\t{graph.cooccurrence[(a, b)]}\n")


@dataclass
class OutfitSubgraph:
    """The induced category subgraph of one outfit, with item payloads.

    Nodes are sorted category ids; payload vectors per node are sorted by
    item id so every downstream reduction has a canonical order (this is
    what makes scores exactly permutation invariant).
    """

    active_nodes: tuple[int, ...]
    node_payload: dict[int, list[np.ndarray]]
    edges: frozenset[tuple[int, int]]

    def neighbors(self) -> list[list[int]]:
        """Per node (in active_nodes order), sorted neighbor positions."""
        pos = {c: i for i, c in enumerate(self.active_nodes)}
        adj: list[list[int]] = [[] for _ in self.active_nodes]
        for a, b in sorted(self.edges):
            adj[pos[a]].append(pos[b])
            adj[pos[b]].append(pos[a])
        return [sorted(n) for n in adj]


def extract_subgraph(
    outfit: Outfit,
    graph: CategoryGraph,
    item_table: dict[str, Item],
    feature_of,
) -> OutfitSubgraph:
    """Induce the outfit's categories from the co-occurrence graph.

    ``feature_of`` maps an item id to its input vector. Categories unseen
    in training stay as isolated active nodes.
    """
    by_cat: dict[int, list[str]] = {}
    for item_id in outfit.items:
        by_cat.setdefault(item_table[item_id].category_id, []).append(item_id)
    active = tuple(sorted(by_cat))
    payload = {
        cat: [feature_of(i) for i in sorted(ids)] for cat, ids in by_cat.items()
    }
    edges = {
        _pair(a, b)
        for idx, a in enumerate(active)
        for b in active[idx + 1 :]
        if graph.has_edge(a, b)
    }
    return OutfitSubgraph(active, payload, frozenset(edges))


@dataclass
class Hypergraph:
    vertices: frozenset[int]
    hyperedges: list[frozenset[int]]
    dropped: int = 0  # outfits collapsing to < 2 distinct categories


def build_hypergraph(outfits: list[Outfit], item_table: dict[str, Item]) -> Hypergraph:
    """One hyperedge per outfit over its distinct categories."""
    vertices: set[int] = set()
    hyperedges: list[frozenset[int]] = []
    dropped = 0
    for outfit in outfits:
        cats = frozenset(item_table[i].category_id for i in outfit.items)
        if len(cats) < 2:
            dropped += 1
            continue
        vertices.update(cats)
        hyperedges.append(cats)
    return Hypergraph(frozenset(vertices), hyperedges, dropped)


@dataclass(frozen=True)
class ConvertedHyperedge:
    """Key/mediator expansion of one hyperedge into simple edges."""

    keys: tuple[int, int]
    mediators: tuple[int, ...]
    edges: tuple[tuple[int, int], ...]


def convert_hyperedge(hyperedge, key_rule=None) -> ConvertedHyperedge:
    """Expand a hyperedge: 2 key nodes, the rest mediators.

    The key edge is always present and each mediator links to both keys,
    giving 2(k-2)+1 edges for k vertices. Default key rule: the two
    smallest category ids (deterministic); pass ``key_rule`` to override.
    """
    cats = sorted(set(hyperedge))
    if len(cats) < 2:
        raise StructureError(f"hyperedge needs >= 2 distinct vertices, got {cats}")
    if key_rule is None:
        keys = (cats[0], cats[1])
    else:
        keys = key_rule(cats)
        if len(set(keys)) != 2 or not set(keys) <= set(cats):
            raise StructureError(f"key rule returned invalid keys {keys!r}")
        keys = tuple(sorted(keys))  # type: ignore[assignment]
    mediators = tuple(c for c in cats if c not in keys)
    edges = [_pair(*keys)]
    for m in mediators:
        edges.append(_pair(m, keys[0]))
        edges.append(_pair(m, keys[1]))
    return ConvertedHyperedge(keys, mediators, tuple(edges))


@dataclass
class ConvertedGraph:
    per_hyperedge: list[ConvertedHyperedge]
    edge_multiplicity: Counter = field(default_factory=Counter)


def convert_hypergraph(h: Hypergraph, key_rule=None) -> ConvertedGraph:
    """Convert every hyperedge; merge parallel edges with multiplicity."""
    converted = [convert_hyperedge(e, key_rule) for e in h.hyperedges]
    multiplicity: Counter = Counter()
    for c in converted:
        multiplicity.update(c.edges)
    return ConvertedGraph(converted, multiplicity)


def hyperedge_subgraph(
    outfit: Outfit,
    item_table: dict[str, Item],
    feature_of,
    key_rule=None,
) -> OutfitSubgraph:
    """Per-outfit converted structure used by the hypergraph model."""
    by_cat: dict[int, list[str]] = {}
    for item_id in outfit.items:
        by_cat.setdefault(item_table[item_id].category_id, []).append(item_id)
    converted = convert_hyperedge(by_cat.keys(), key_rule)
    active = tuple(sorted(by_cat))
    payload = {
        cat: [feature_of(i) for i in sorted(ids)] for cat, ids in by_cat.items()
    }
    return OutfitSubgraph(active, payload, frozenset(converted.edges))
