"""Single-pushout rewriting of typed graphs.

A rule is a partial injective morphism between left- and right-hand
graphs, optionally guarded by negative application conditions. Deleting
a node deletes its incident edges. Matches are total injective and
enumerated in lexicographic order so every consumer is deterministic.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator, Optional

from .graph import (
    Edge,
    FormatError,
    GraphError,
    PartialMorphism,
    TypedGraph,
    TypeGraph,
    find_isomorphism,
    graph_from_dict,
    iso_signature,
    validate_typing,
)


class StaleMatchError(GraphError):
    """The host graph changed between matching and application."""


@dataclass(slots=True)
class NAC:
    """Negative condition: an extension of L whose image forbids a match."""

    graph: TypedGraph
    embedding: PartialMorphism  # total injective L -> graph

    def __post_init__(self) -> None:
        if not self.embedding.is_total() or not self.embedding.is_injective():
            raise GraphError("NAC embedding must be total and injective")
        if self.embedding.dst is not self.graph:
            raise GraphError("NAC embedding must target the NAC graph")


class Rule:
    """SPO rule: lhs, rhs, and an injective partial mapping between them."""

    def __init__(
        self,
        name: str,
        lhs: TypedGraph,
        rhs: TypedGraph,
        mapping: PartialMorphism,
        nacs: tuple[NAC, ...] = (),
    ) -> None:
        if lhs.tg != rhs.tg:
            raise GraphError("rule sides must share one type graph")
        if mapping.src is not lhs or mapping.dst is not rhs:
            raise GraphError("rule mapping must run from lhs to rhs")
        if not mapping.is_injective():
            raise GraphError("rule mapping must be injective on its domain")
        for nac in nacs:
            if nac.embedding.src is not lhs:
                raise GraphError("NAC embedding must start at the rule lhs")
            if nac.graph.tg != lhs.tg:
                raise GraphError("NAC graph must share the rule's type graph")
        self.name = name
        self.lhs = lhs
        self.rhs = rhs
        self.mapping = mapping
        self.nacs = tuple(nacs)

    def deleted_lhs_nodes(self) -> list[str]:
        return [n for n in self.lhs.node_ids() if n not in self.mapping.node_map]

    def created_rhs_nodes(self) -> list[str]:
        image = set(self.mapping.node_map.values())
        return [n for n in self.rhs.node_ids() if n not in image]

    def __repr__(self) -> str:
        return f"Rule({self.name!r})"


@dataclass(slots=True)
class Match:
    """A total injective occurrence of a rule's lhs in a host graph."""

    rule: Rule
    morphism: PartialMorphism  # total injective lhs -> host
    host_revision: int

    @property
    def node_map(self) -> dict[str, str]:
        return self.morphism.node_map

    @property
    def edge_map(self) -> dict[str, str]:
        return self.morphism.edge_map


@dataclass(slots=True)
class ApplyResult:
    """Outcome of one rule application."""

    result: TypedGraph
    comorphism: PartialMorphism  # host -> result, identity on survivors
    created: set[str]
    deleted: set[str]
    rhs_node_map: dict[str, str]  # rhs -> result (the derived match m')
    rhs_edge_map: dict[str, str]


class GraphGrammar:
    """A start graph together with a set of rules over one type graph."""

    def __init__(self, start: TypedGraph, rules: tuple[Rule, ...]) -> None:
        for rule in rules:
            if rule.lhs.tg != start.tg:
                raise GraphError(f"rule {rule.name!r} typed over a foreign type graph")
        self.start = start
        self.rules = tuple(rules)


@dataclass(slots=True)
class LanguageResult:
    """Graphs reachable within a node bound, up to isomorphism."""

    graphs: list[TypedGraph]
    max_nodes: int
    warnings: list[str] = field(default_factory=list)

    def contains(self, g: TypedGraph) -> bool:
        sig = iso_signature(g)
        return any(
            iso_signature(m) == sig and find_isomorphism(g, m) is not None
            for m in self.graphs
        )


def _parallel_count(g: TypedGraph, src: str, trg: str, etype: str) -> int:
    return sum(
        1 for _, e in g.out_edges(src) if e.trg == trg and e.type == etype
    )


def _enumerate_monos(
    pattern: TypedGraph,
    host: TypedGraph,
    forced_nodes: dict[str, str],
    forced_edges: Optional[dict[str, str]] = None,
    injective: bool = True,
) -> Iterator[tuple[dict[str, str], dict[str, str]]]:
    """Yield structure- and typing-preserving occurrences, smallest first.

    Node images may specialize the pattern's node type via inheritance.
    Order is lexicographic over host ids taken in sorted pattern-id
    order, nodes before edges.
    """
    pnodes = pattern.node_ids()
    pedges = pattern.edge_ids()
    forced_edges = forced_edges or {}

    def node_ok(pn: str, hn: str, assigned: dict[str, str]) -> bool:
        if hn not in host.nodes:
            return False
        if not host.tg.conforms(host.nodes[hn], pattern.nodes[pn]):
            return False
        if injective and hn in assigned.values():
            return False
        # every pattern edge between assigned endpoints needs host capacity
        trial = dict(assigned)
        trial[pn] = hn
        for a in trial:
            for b in trial:
                for etype in {
                    e.type for _, e in pattern.out_edges(a) if e.trg == b
                }:
                    need = _parallel_count(pattern, a, b, etype)
                    have = _parallel_count(host, trial[a], trial[b], etype)
                    if injective:
                        if have < need:
                            return False
                    elif need > 0 and have == 0:
                        return False
        return True

    for pn, hn in forced_nodes.items():
        if pn not in pattern.nodes:
            raise GraphError(f"forced assignment names unknown pattern node {pn!r}")

    def assign_nodes(i: int, assigned: dict[str, str]) -> Iterator[dict[str, str]]:
        if i == len(pnodes):
            yield dict(assigned)
            return
        pn = pnodes[i]
        if pn in forced_nodes:
            hn = forced_nodes[pn]
            if node_ok(pn, hn, {k: v for k, v in assigned.items() if k != pn}):
                assigned[pn] = hn
                yield from assign_nodes(i + 1, assigned)
                del assigned[pn]
            return
        for hn in host.node_ids():
            if node_ok(pn, hn, assigned):
                assigned[pn] = hn
                yield from assign_nodes(i + 1, assigned)
                del assigned[pn]

    def assign_edges(
        nodes: dict[str, str], i: int, emap: dict[str, str], used: set[str]
    ) -> Iterator[dict[str, str]]:
        if i == len(pedges):
            yield dict(emap)
            return
        pe = pedges[i]
        e = pattern.edges[pe]
        want_src, want_trg = nodes[e.src], nodes[e.trg]
        if pe in forced_edges:
            candidates = [forced_edges[pe]]
        else:
            candidates = [
                hid
                for hid, he in host.out_edges(want_src)
                if he.trg == want_trg and he.type == e.type
            ]
        for hid in candidates:
            if injective and hid in used:
                continue
            he = host.edges.get(hid)
            if he is None or he.src != want_src or he.trg != want_trg:
                continue
            emap[pe] = hid
            used.add(hid)
            yield from assign_edges(nodes, i + 1, emap, used)
            del emap[pe]
            used.discard(hid)

    for nodes in assign_nodes(0, {}):
        for emap in assign_edges(nodes, 0, {}, set()):
            yield nodes, emap


def check_nac(nac: NAC, match: Match, injective: bool = True) -> bool:
    """True if the match is allowed; False if a forbidding witness exists.

    A witness is a morphism q from the NAC graph into the host agreeing
    with the match on the embedded lhs. Witnesses are injective unless
    relaxed via the flag.
    """
    host = match.morphism.dst
    forced_nodes = {
        nac.embedding.node_map[l]: match.node_map[l]
        for l in match.node_map
    }
    forced_edges = {
        nac.embedding.edge_map[l]: match.edge_map[l]
        for l in match.edge_map
    }
    for _ in _enumerate_monos(
        nac.graph, host, forced_nodes, forced_edges, injective=injective
    ):
        return False
    return True


def find_matches(
    rule: Rule,
    host: TypedGraph,
    partial: Optional[dict[str, str]] = None,
    nac_injective: bool = True,
) -> list[Match]:
    """All NAC-respecting total injective matches, lexicographically ordered.

    `partial` pins lhs nodes to host nodes ahead of the search; it must
    be injective and type-consistent.
    """
    if rule.lhs.tg != host.tg:
        raise GraphError("rule and host must share one type graph")
    partial = dict(partial or {})
    if len(set(partial.values())) != len(partial):
        raise GraphError("partial assignment must be injective")
    for ln, hn in partial.items():
        if ln not in rule.lhs.nodes:
            raise GraphError(f"partial assignment names unknown lhs node {ln!r}")
        if hn not in host.nodes:
            raise GraphError(f"partial assignment targets unknown host node {hn!r}")
        if not host.tg.conforms(host.nodes[hn], rule.lhs.nodes[ln]):
            raise GraphError(
                f"partial assignment {ln!r} -> {hn!r} is type-inconsistent"
            )

    lhs_nodes = rule.lhs.node_ids()
    lhs_edges = rule.lhs.edge_ids()
    matches = []
    for node_map, edge_map in _enumerate_monos(rule.lhs, host, partial):
        morphism = PartialMorphism(rule.lhs, host, node_map, edge_map)
        match = Match(rule, morphism, host.revision)
        if all(check_nac(nac, match, injective=nac_injective) for nac in rule.nacs):
            matches.append(match)
    matches.sort(
        key=lambda m: (
            tuple(m.node_map[n] for n in lhs_nodes),
            tuple(m.edge_map[e] for e in lhs_edges),
        )
    )
    return matches


_FRESH_NODE = re.compile(r"^n#(\d+)$")
_FRESH_EDGE = re.compile(r"^e#(\d+)$")


def _next_fresh(host: TypedGraph) -> tuple[int, int]:
    n = max(
        (int(m.group(1)) for nid in host.nodes if (m := _FRESH_NODE.match(nid))),
        default=0,
    )
    e = max(
        (int(m.group(1)) for eid in host.edges if (m := _FRESH_EDGE.match(eid))),
        default=0,
    )
    return n + 1, e + 1


def apply_rule(rule: Rule, match: Match, host: TypedGraph) -> ApplyResult:
    """Apply the rule at the match: delete, then glue fresh rhs material.

    Deleted elements are the images of lhs elements outside the rule
    mapping plus every edge incident to a deleted node. Survivors keep
    their ids; created elements get n#k / e#k ids numbered past any
    already present in the host.
    """
    if match.rule is not rule:
        raise GraphError("match was produced for a different rule")
    if match.morphism.dst is not host or match.host_revision != host.revision:
        raise StaleMatchError("host changed since the match was found")

    deleted_nodes = {match.node_map[n] for n in rule.deleted_lhs_nodes()}
    deleted_edges = {
        match.edge_map[e]
        for e in rule.lhs.edge_ids()
        if e not in rule.mapping.edge_map
    }
    for eid, e in host.edges.items():
        if e.src in deleted_nodes or e.trg in deleted_nodes:
            deleted_edges.add(eid)

    nodes = {
        nid: t for nid, t in host.nodes.items() if nid not in deleted_nodes
    }
    edges = {
        eid: e for eid, e in host.edges.items() if eid not in deleted_edges
    }

    next_n, next_e = _next_fresh(host)
    rhs_node_map: dict[str, str] = {}
    for ln, rn in rule.mapping.node_map.items():
        rhs_node_map[rn] = match.node_map[ln]
    created: set[str] = set()
    for rn in rule.created_rhs_nodes():
        nid = f"n#{next_n}"
        next_n += 1
        nodes[nid] = rule.rhs.nodes[rn]
        rhs_node_map[rn] = nid
        created.add(nid)

    rhs_edge_map: dict[str, str] = {}
    for le, re_ in rule.mapping.edge_map.items():
        rhs_edge_map[re_] = match.edge_map[le]
    preserved_rhs_edges = set(rule.mapping.edge_map.values())
    for reid in rule.rhs.edge_ids():
        if reid in preserved_rhs_edges:
            continue
        redge = rule.rhs.edges[reid]
        eid = f"e#{next_e}"
        next_e += 1
        edges[eid] = Edge(
            redge.type, rhs_node_map[redge.src], rhs_node_map[redge.trg]
        )
        rhs_edge_map[reid] = eid
        created.add(eid)

    result = TypedGraph(host.tg, nodes, edges)
    comorphism = PartialMorphism(
        host,
        result,
        {n: n for n in host.nodes if n not in deleted_nodes},
        {e: e for e in host.edges if e not in deleted_edges},
    )
    return ApplyResult(
        result=result,
        comorphism=comorphism,
        created=created,
        deleted=deleted_nodes | deleted_edges,
        rhs_node_map=rhs_node_map,
        rhs_edge_map=rhs_edge_map,
    )


def enumerate_language(grammar: GraphGrammar, max_nodes: int) -> LanguageResult:
    """Breadth-first closure of the grammar under a node-count bound.

    Intermediates above the bound are pruned, which only loses graphs
    when some rule shrinks node counts; that case is recorded as a
    warning in the result.
    """
    if max_nodes < len(grammar.start.nodes):
        raise GraphError("max_nodes is below the start graph's node count")
    warnings = []
    for rule in grammar.rules:
        if rule.deleted_lhs_nodes():
            warnings.append(
                f"rule {rule.name!r} deletes nodes; pruning may drop members"
            )

    kept: list[TypedGraph] = [grammar.start]
    buckets: dict[tuple, list[TypedGraph]] = {
        iso_signature(grammar.start): [grammar.start]
    }
    frontier = [grammar.start]
    rules = sorted(grammar.rules, key=lambda r: r.name)
    while frontier:
        next_frontier: list[TypedGraph] = []
        for g in frontier:
            for rule in rules:
                for match in find_matches(rule, g):
                    h = apply_rule(rule, match, g).result
                    if len(h.nodes) > max_nodes:
                        continue
                    sig = iso_signature(h)
                    bucket = buckets.setdefault(sig, [])
                    if any(find_isomorphism(h, seen) for seen in bucket):
                        continue
                    bucket.append(h)
                    kept.append(h)
                    next_frontier.append(h)
        frontier = next_frontier
    kept.sort(key=lambda g: (len(g.nodes), len(g.edges), iso_signature(g)))
    return LanguageResult(graphs=kept, max_nodes=max_nodes, warnings=warnings)


def rule_to_dict(rule: Rule) -> dict:
    pairs = [
        {"l": l, "r": r} for l, r in sorted(rule.mapping.node_map.items())
    ] + [{"l": l, "r": r} for l, r in sorted(rule.mapping.edge_map.items())]
    nacs = []
    for nac in rule.nacs:
        embed = [
            {"l": l, "n": n} for l, n in sorted(nac.embedding.node_map.items())
        ] + [{"l": l, "n": n} for l, n in sorted(nac.embedding.edge_map.items())]
        nacs.append({"graph": nac.graph.to_dict(), "embed": embed})
    data = {
        "name": rule.name,
        "lhs": rule.lhs.to_dict(),
        "rhs": rule.rhs.to_dict(),
        "map": pairs,
    }
    if nacs:
        data["nacs"] = nacs
    return data


def rule_from_dict(data: dict, tg: TypeGraph) -> Rule:
    try:
        name = data["name"]
        lhs = graph_from_dict(data["lhs"], tg)
        rhs = graph_from_dict(data["rhs"], tg)
        raw_map = data["map"]
    except (KeyError, TypeError) as exc:
        raise FormatError(f"rule missing field: {exc}") from exc
    node_map: dict[str, str] = {}
    edge_map: dict[str, str] = {}
    for pair in raw_map:
        l, r = pair["l"], pair["r"]
        if l in lhs.nodes:
            node_map[l] = r
        elif l in lhs.edges:
            edge_map[l] = r
        else:
            raise FormatError(f"rule map names unknown lhs element {l!r}")
    try:
        mapping = PartialMorphism(lhs, rhs, node_map, edge_map)
    except GraphError as exc:
        raise FormatError(str(exc)) from exc
    nacs = []
    for raw in data.get("nacs", []):
        ngraph = graph_from_dict(raw["graph"], tg)
        nnodes: dict[str, str] = {}
        nedges: dict[str, str] = {}
        for pair in raw.get("embed", []):
            l, n = pair["l"], pair["n"]
            if l in lhs.nodes:
                nnodes[l] = n
            elif l in lhs.edges:
                nedges[l] = n
            else:
                raise FormatError(f"NAC embed names unknown lhs element {l!r}")
        try:
            embedding = PartialMorphism(lhs, ngraph, nnodes, nedges)
            nacs.append(NAC(ngraph, embedding))
        except GraphError as exc:
            raise FormatError(str(exc)) from exc
    try:
        return Rule(name, lhs, rhs, mapping, tuple(nacs))
    except GraphError as exc:
        raise FormatError(str(exc)) from exc
