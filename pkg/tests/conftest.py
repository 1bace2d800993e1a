"""Shared builders for the test suite."""

from __future__ import annotations

import random

import pytest

from sdm.graph import Edge, EdgeType, GraphBuilder, TypedGraph, TypeGraph


@pytest.fixture
def list_tg() -> TypeGraph:
    return linked_list_tg()


def linked_list_tg() -> TypeGraph:
    return TypeGraph(
        "linked-list",
        {"Object": None},
        {"next": EdgeType("Object", "Object")},
    )


def zoo_tg() -> TypeGraph:
    """Small inheritance-bearing type graph for property tests."""
    return TypeGraph(
        "zoo",
        {"Animal": None, "Cat": "Animal", "Dog": "Animal", "Toy": None},
        {
            "chases": EdgeType("Animal", "Animal"),
            "owns": EdgeType("Animal", "Toy"),
        },
    )


def make_list(tg: TypeGraph, length: int) -> TypedGraph:
    """A chain o1 -next-> o2 -next-> ... of the given length."""
    b = GraphBuilder(tg)
    for i in range(1, length + 1):
        b.node(f"o{i}", "Object")
    for i in range(1, length):
        b.edge(f"l{i}", "next", f"o{i}", f"o{i + 1}")
    return b.build()


def random_graph(
    rng: random.Random, tg: TypeGraph, max_nodes: int, max_edges: int
) -> TypedGraph:
    """Random well-typed graph over tg with concrete node types."""
    concrete = sorted(tg.node_types)
    n = rng.randint(1, max_nodes)
    nodes = {f"v{i}": rng.choice(concrete) for i in range(n)}
    edges: dict[str, Edge] = {}
    attempts = rng.randint(0, max_edges)
    eid = 0
    for _ in range(attempts):
        etype = rng.choice(sorted(tg.edge_types))
        decl = tg.edge_types[etype]
        srcs = [v for v, t in nodes.items() if tg.conforms(t, decl.src)]
        trgs = [v for v, t in nodes.items() if tg.conforms(t, decl.trg)]
        if not srcs or not trgs:
            continue
        edges[f"e{eid}"] = Edge(etype, rng.choice(srcs), rng.choice(trgs))
        eid += 1
    return TypedGraph(tg, nodes, edges)


def shuffled_copy(rng: random.Random, g: TypedGraph) -> TypedGraph:
    """Isomorphic copy with renamed ids."""
    node_names = {n: f"m{i}" for i, n in enumerate(rng.sample(g.node_ids(), len(g.nodes)))}
    edges = {
        f"f{i}": Edge(e.type, node_names[e.src], node_names[e.trg])
        for i, (eid, e) in enumerate(sorted(g.edges.items()))
    }
    nodes = {node_names[n]: t for n, t in g.nodes.items()}
    return TypedGraph(g.tg, nodes, edges)
