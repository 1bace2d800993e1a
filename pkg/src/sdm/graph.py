"""Typed multigraphs with single-inheritance type graphs.

Graphs are immutable values after construction; rewriting produces new
graphs. Node and edge ids are opaque strings sharing one namespace per
graph, and every deterministic ordering in the package is lexicographic
id order.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional


class GraphError(Exception):
    """Structural problem in a graph, type graph, or morphism."""


class FormatError(Exception):
    """Malformed or inconsistent serialized input."""


# process-wide revision stamps, used only for stale-match detection
_revision_counter = itertools.count(1)


@dataclass(frozen=True, slots=True)
class EdgeType:
    """Declared edge type with its endpoint node types."""

    src: str
    trg: str


class TypeGraph:
    """Named node types with optional single inheritance, plus edge types."""

    def __init__(
        self,
        name: str,
        node_types: dict[str, Optional[str]],
        edge_types: dict[str, EdgeType],
    ) -> None:
        self.name = name
        self.node_types = dict(node_types)
        self.edge_types = dict(edge_types)
        for child, parent in self.node_types.items():
            if parent is not None and parent not in self.node_types:
                raise GraphError(f"node type {child!r} names unknown parent {parent!r}")
        for tname, et in self.edge_types.items():
            for endpoint in (et.src, et.trg):
                if endpoint not in self.node_types:
                    raise GraphError(
                        f"edge type {tname!r} names unknown node type {endpoint!r}"
                    )
        # inheritance must be acyclic
        for start in self.node_types:
            seen = {start}
            cur = self.node_types[start]
            while cur is not None:
                if cur in seen:
                    raise GraphError(f"inheritance cycle through {start!r}")
                seen.add(cur)
                cur = self.node_types[cur]

    def conforms(self, node_type: str, ancestor: str) -> bool:
        """True if node_type equals ancestor or transitively inherits from it."""
        cur: Optional[str] = node_type
        while cur is not None:
            if cur == ancestor:
                return True
            cur = self.node_types.get(cur)
        return False

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TypeGraph):
            return NotImplemented
        return (
            self.name == other.name
            and self.node_types == other.node_types
            and self.edge_types == other.edge_types
        )

    def __repr__(self) -> str:
        return f"TypeGraph({self.name!r}, {len(self.node_types)} node types)"

    def to_dict(self) -> dict:
        node_types = []
        for name in sorted(self.node_types):
            entry: dict = {"name": name}
            if self.node_types[name] is not None:
                entry["parent"] = self.node_types[name]
            node_types.append(entry)
        edge_types = [
            {"name": name, "src": et.src, "trg": et.trg}
            for name, et in sorted(self.edge_types.items())
        ]
        return {"name": self.name, "node_types": node_types, "edge_types": edge_types}

    @classmethod
    def from_dict(cls, data: dict) -> "TypeGraph":
        try:
            name = data["name"]
            raw_nodes = data["node_types"]
            raw_edges = data["edge_types"]
        except (KeyError, TypeError) as exc:
            raise FormatError(f"type graph missing field: {exc}") from exc
        node_types: dict[str, Optional[str]] = {}
        for entry in raw_nodes:
            if entry["name"] in node_types:
                raise FormatError(f"duplicate node type {entry['name']!r}")
            node_types[entry["name"]] = entry.get("parent")
        edge_types: dict[str, EdgeType] = {}
        for entry in raw_edges:
            if entry["name"] in edge_types:
                raise FormatError(f"duplicate edge type {entry['name']!r}")
            edge_types[entry["name"]] = EdgeType(entry["src"], entry["trg"])
        try:
            return cls(name, node_types, edge_types)
        except GraphError as exc:
            raise FormatError(str(exc)) from exc


@dataclass(frozen=True, slots=True)
class Edge:
    """Edge instance: type name plus source and target node ids."""

    type: str
    src: str
    trg: str


class TypedGraph:
    """Directed typed multigraph. Treat as immutable once built."""

    def __init__(
        self,
        tg: TypeGraph,
        nodes: dict[str, str],
        edges: dict[str, Edge],
    ) -> None:
        self.tg = tg
        self.nodes = dict(nodes)
        self.edges = dict(edges)
        self.revision = next(_revision_counter)
        overlap = self.nodes.keys() & self.edges.keys()
        if overlap:
            raise GraphError(f"ids used for both nodes and edges: {sorted(overlap)}")
        for eid, e in self.edges.items():
            if e.src not in self.nodes or e.trg not in self.nodes:
                raise GraphError(f"edge {eid!r} references missing endpoint")

    def node_ids(self) -> list[str]:
        return sorted(self.nodes)

    def edge_ids(self) -> list[str]:
        return sorted(self.edges)

    def out_edges(self, node: str) -> list[tuple[str, Edge]]:
        return [(eid, e) for eid, e in sorted(self.edges.items()) if e.src == node]

    def in_edges(self, node: str) -> list[tuple[str, Edge]]:
        return [(eid, e) for eid, e in sorted(self.edges.items()) if e.trg == node]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TypedGraph):
            return NotImplemented
        return (
            self.tg == other.tg
            and self.nodes == other.nodes
            and self.edges == other.edges
        )

    def __repr__(self) -> str:
        return f"TypedGraph({len(self.nodes)} nodes, {len(self.edges)} edges)"

    def to_dict(self) -> dict:
        return {
            "typegraph": self.tg.name,
            "nodes": [
                {"id": nid, "type": t} for nid, t in sorted(self.nodes.items())
            ],
            "edges": [
                {"id": eid, "type": e.type, "src": e.src, "trg": e.trg}
                for eid, e in sorted(self.edges.items())
            ],
        }


class GraphBuilder:
    """Small helper for assembling graphs in code and tests."""

    def __init__(self, tg: TypeGraph) -> None:
        self.tg = tg
        self._nodes: dict[str, str] = {}
        self._edges: dict[str, Edge] = {}

    def node(self, nid: str, ntype: str) -> "GraphBuilder":
        if nid in self._nodes:
            raise GraphError(f"duplicate node id {nid!r}")
        self._nodes[nid] = ntype
        return self

    def edge(self, eid: str, etype: str, src: str, trg: str) -> "GraphBuilder":
        if eid in self._edges:
            raise GraphError(f"duplicate edge id {eid!r}")
        self._edges[eid] = Edge(etype, src, trg)
        return self

    def build(self) -> TypedGraph:
        return TypedGraph(self.tg, self._nodes, self._edges)


@dataclass(slots=True)
class ValidationReport:
    """Outcome of a typing check, with one message per violation."""

    ok: bool
    violations: list[str] = field(default_factory=list)


def validate_typing(g: TypedGraph, tg: TypeGraph) -> ValidationReport:
    """Check that g is well typed over tg; reports, never raises."""
    violations: list[str] = []
    for nid in g.node_ids():
        if g.nodes[nid] not in tg.node_types:
            violations.append(f"node {nid!r}: unknown node type {g.nodes[nid]!r}")
    for eid in g.edge_ids():
        e = g.edges[eid]
        et = tg.edge_types.get(e.type)
        if et is None:
            violations.append(f"edge {eid!r}: unknown edge type {e.type!r}")
            continue
        for endpoint, declared, role in (
            (e.src, et.src, "source"),
            (e.trg, et.trg, "target"),
        ):
            ntype = g.nodes.get(endpoint)
            if ntype is None or ntype not in tg.node_types:
                continue  # endpoint problem already reported
            if not tg.conforms(ntype, declared):
                violations.append(
                    f"edge {eid!r}: {role} {endpoint!r} of type {ntype!r} "
                    f"does not conform to {declared!r}"
                )
    return ValidationReport(ok=not violations, violations=violations)


class PartialMorphism:
    """Partial graph morphism given by explicit node and edge maps.

    The domain is the keyset of the maps and must be a well-formed
    subgraph of the source. Node images must conform to the source
    node's type (equality or inheritance); edge images keep their edge
    type exactly.
    """

    def __init__(
        self,
        src: TypedGraph,
        dst: TypedGraph,
        node_map: dict[str, str],
        edge_map: dict[str, str],
    ) -> None:
        self.src = src
        self.dst = dst
        self.node_map = dict(node_map)
        self.edge_map = dict(edge_map)
        for l, r in self.node_map.items():
            if l not in src.nodes:
                raise GraphError(f"morphism maps unknown source node {l!r}")
            if r not in dst.nodes:
                raise GraphError(f"morphism maps node {l!r} to unknown node {r!r}")
            if src.tg == dst.tg and not src.tg.conforms(
                dst.nodes[r], src.nodes[l]
            ):
                raise GraphError(
                    f"morphism maps node {l!r} ({src.nodes[l]!r}) to "
                    f"{r!r} ({dst.nodes[r]!r}) breaking typing"
                )
        for l, r in self.edge_map.items():
            if l not in src.edges:
                raise GraphError(f"morphism maps unknown source edge {l!r}")
            if r not in dst.edges:
                raise GraphError(f"morphism maps edge {l!r} to unknown edge {r!r}")
            le, re = src.edges[l], dst.edges[r]
            if le.type != re.type:
                raise GraphError(f"morphism changes type of edge {l!r}")
            # domain must be subgraph-closed and structure must commute
            if le.src not in self.node_map or le.trg not in self.node_map:
                raise GraphError(f"edge {l!r} in domain but an endpoint is not")
            if self.node_map[le.src] != re.src or self.node_map[le.trg] != re.trg:
                raise GraphError(f"morphism does not commute on edge {l!r}")

    def is_total(self) -> bool:
        return len(self.node_map) == len(self.src.nodes) and len(
            self.edge_map
        ) == len(self.src.edges)

    def is_injective(self) -> bool:
        return len(set(self.node_map.values())) == len(self.node_map) and len(
            set(self.edge_map.values())
        ) == len(self.edge_map)

    def __repr__(self) -> str:
        return (
            f"PartialMorphism({len(self.node_map)}/{len(self.src.nodes)} nodes, "
            f"{len(self.edge_map)}/{len(self.src.edges)} edges)"
        )


def iso_signature(g: TypedGraph) -> tuple:
    """Cheap isomorphism-invariant key for bucketing graphs."""
    per_node = []
    for nid in g.node_ids():
        outs: dict[str, int] = {}
        ins: dict[str, int] = {}
        for _, e in g.out_edges(nid):
            outs[e.type] = outs.get(e.type, 0) + 1
        for _, e in g.in_edges(nid):
            ins[e.type] = ins.get(e.type, 0) + 1
        per_node.append(
            (g.nodes[nid], tuple(sorted(outs.items())), tuple(sorted(ins.items())))
        )
    return (len(g.nodes), len(g.edges), tuple(sorted(per_node)))


def find_isomorphism(g: TypedGraph, h: TypedGraph) -> Optional[PartialMorphism]:
    """Deterministic search for a type-exact isomorphism g -> h.

    Returns a total bijective morphism or None. Both graphs must share
    one type graph.
    """
    if g.tg != h.tg:
        raise GraphError("isomorphism requires a shared type graph")
    if len(g.nodes) != len(h.nodes) or len(g.edges) != len(h.edges):
        return None
    if iso_signature(g) != iso_signature(h):
        return None

    g_nodes = g.node_ids()
    h_by_type: dict[str, list[str]] = {}
    for nid in h.node_ids():
        h_by_type.setdefault(h.nodes[nid], []).append(nid)

    def node_degrees(graph: TypedGraph, nid: str) -> tuple:
        outs: dict[str, int] = {}
        ins: dict[str, int] = {}
        for _, e in graph.out_edges(nid):
            outs[e.type] = outs.get(e.type, 0) + 1
        for _, e in graph.in_edges(nid):
            ins[e.type] = ins.get(e.type, 0) + 1
        return (tuple(sorted(outs.items())), tuple(sorted(ins.items())))

    g_deg = {nid: node_degrees(g, nid) for nid in g.nodes}
    h_deg = {nid: node_degrees(h, nid) for nid in h.nodes}

    assignment: dict[str, str] = {}
    used: set[str] = set()

    def edges_consistent(gl: str, hl: str) -> bool:
        # every g-edge between assigned nodes needs a matching h-edge count
        for other_g, other_h in assignment.items():
            for a, b, ha, hb in (
                (gl, other_g, hl, other_h),
                (other_g, gl, other_h, hl),
            ):
                need: dict[str, int] = {}
                have: dict[str, int] = {}
                for _, e in g.out_edges(a):
                    if e.trg == b:
                        need[e.type] = need.get(e.type, 0) + 1
                for _, e in h.out_edges(ha):
                    if e.trg == hb:
                        have[e.type] = have.get(e.type, 0) + 1
                if need != have:
                    return False
        # self loops
        need = {}
        have = {}
        for _, e in g.out_edges(gl):
            if e.trg == gl:
                need[e.type] = need.get(e.type, 0) + 1
        for _, e in h.out_edges(hl):
            if e.trg == hl:
                have[e.type] = have.get(e.type, 0) + 1
        return need == have

    def backtrack(i: int) -> bool:
        if i == len(g_nodes):
            return True
        gl = g_nodes[i]
        for hl in h_by_type.get(g.nodes[gl], []):
            if hl in used or h_deg[hl] != g_deg[gl]:
                continue
            if not edges_consistent(gl, hl):
                continue
            assignment[gl] = hl
            used.add(hl)
            if backtrack(i + 1):
                return True
            del assignment[gl]
            used.remove(hl)
        return False

    if not backtrack(0):
        return None

    # pair up parallel edges deterministically
    edge_map: dict[str, str] = {}
    h_used: set[str] = set()
    for eid in g.edge_ids():
        e = g.edges[eid]
        for hid, he in h.out_edges(assignment[e.src]):
            if hid in h_used:
                continue
            if he.trg == assignment[e.trg] and he.type == e.type:
                edge_map[eid] = hid
                h_used.add(hid)
                break
        else:
            return None  # signature said yes but multiset differs
    return PartialMorphism(g, h, assignment, edge_map)


def serialize_graph(g: TypedGraph) -> str:
    """Canonical UTF-8 JSON text for a graph (sorted, round-trips by id)."""
    return json.dumps(g.to_dict(), indent=2, sort_keys=True)


def parse_graph(text: str, tg: TypeGraph) -> TypedGraph:
    """Parse the JSON graph format and check typing against tg."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"not valid JSON: {exc}") from exc
    return graph_from_dict(data, tg)


def graph_from_dict(data: dict, tg: TypeGraph) -> TypedGraph:
    if not isinstance(data, dict):
        raise FormatError("graph document must be a JSON object")
    declared = data.get("typegraph")
    if declared is not None and declared != tg.name:
        raise FormatError(
            f"graph declares type graph {declared!r}, expected {tg.name!r}"
        )
    nodes: dict[str, str] = {}
    for entry in data.get("nodes", []):
        try:
            nid, ntype = entry["id"], entry["type"]
        except (KeyError, TypeError) as exc:
            raise FormatError(f"bad node entry {entry!r}") from exc
        if nid in nodes:
            raise FormatError(f"duplicate node id {nid!r}")
        nodes[nid] = ntype
    edges: dict[str, Edge] = {}
    for entry in data.get("edges", []):
        try:
            eid = entry["id"]
            edge = Edge(entry["type"], entry["src"], entry["trg"])
        except (KeyError, TypeError) as exc:
            raise FormatError(f"bad edge entry {entry!r}") from exc
        if eid in edges or eid in nodes:
            raise FormatError(f"duplicate id {eid!r}")
        if edge.src not in nodes or edge.trg not in nodes:
            raise FormatError(f"edge {eid!r} references missing endpoint")
        edges[eid] = edge
    try:
        g = TypedGraph(tg, nodes, edges)
    except GraphError as exc:
        raise FormatError(str(exc)) from exc
    report = validate_typing(g, tg)
    if not report.ok:
        raise FormatError("; ".join(report.violations))
    return g


def serialize_type_graph(tg: TypeGraph) -> str:
    return json.dumps(tg.to_dict(), indent=2, sort_keys=True)


def parse_type_graph(text: str) -> TypeGraph:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"not valid JSON: {exc}") from exc
    return TypeGraph.from_dict(data)
