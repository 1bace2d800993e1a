"""Control-flow graphs for story diagrams, as a graph grammar.

The grammar grows a minimal start graph (start, one story node, stop)
by inserting structure into existing `next` edges: plain nodes,
conditionals whose branches join or dead-end in fresh stop nodes, and
head-controlled loops in either polarity. Membership is decided by
backward reduction, and member graphs are classified node by node for
the interpreter.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

from .graph import (
    Edge,
    EdgeType,
    GraphBuilder,
    GraphError,
    PartialMorphism,
    TypedGraph,
    TypeGraph,
    find_isomorphism,
    iso_signature,
    validate_typing,
)
from .rewrite import (
    GraphGrammar,
    Rule,
    _enumerate_monos,
    apply_rule,
    find_matches,
    rule_to_dict,
)

ABSTRACT = "AbstractNode"
CF_NODE = "CFNode"
START_NODE = "StartNode"
STOP_NODE = "StopNode"
NEXT = "next"
SUCCESS = "success"
FAILURE = "failure"

SEQUENTIAL = "sequential"
COND_JOINING = "conditional-joining"
COND_NONJOINING = "conditional-nonjoining"
LOOP_HEAD_SUCCESS = "loop-head-success"
LOOP_HEAD_FAILURE = "loop-head-failure"

KIND_SEQUENTIAL = "sequential"
KIND_JOINING = "joining"
KIND_NONJOINING = "non-joining"
KIND_WHILE = "while"


def syntax_type_graph() -> TypeGraph:
    """Type graph for control-flow graphs: three node kinds, three edges."""
    return TypeGraph(
        "ControlFlowSyntax",
        {
            ABSTRACT: None,
            CF_NODE: ABSTRACT,
            START_NODE: ABSTRACT,
            STOP_NODE: ABSTRACT,
        },
        {
            NEXT: EdgeType(ABSTRACT, ABSTRACT),
            SUCCESS: EdgeType(ABSTRACT, ABSTRACT),
            FAILURE: EdgeType(ABSTRACT, ABSTRACT),
        },
    )


SYNTAX_TYPE_GRAPH = syntax_type_graph()


def start_graph() -> TypedGraph:
    """Minimal valid control flow: start, one story node, stop."""
    return (
        GraphBuilder(SYNTAX_TYPE_GRAPH)
        .node("start", START_NODE)
        .node("story", CF_NODE)
        .node("stop", STOP_NODE)
        .edge("e1", NEXT, "start", "story")
        .edge("e2", NEXT, "story", "stop")
        .build()
    )


def _shared_lhs() -> TypedGraph:
    # the one left-hand side every rule shares: a -next-> b
    return (
        GraphBuilder(SYNTAX_TYPE_GRAPH)
        .node("a", ABSTRACT)
        .node("b", ABSTRACT)
        .edge("ab", NEXT, "a", "b")
        .build()
    )


def _make_rule(
    name: str,
    new_nodes: list[tuple[str, str]],
    new_edges: list[tuple[str, str, str, str]],
) -> Rule:
    """Build an insertion rule: delete a-next->b, add the given material."""
    lhs = _shared_lhs()
    rhs_builder = GraphBuilder(SYNTAX_TYPE_GRAPH).node("a", ABSTRACT).node(
        "b", ABSTRACT
    )
    for nid, ntype in new_nodes:
        rhs_builder.node(nid, ntype)
    for eid, etype, src, trg in new_edges:
        rhs_builder.edge(eid, etype, src, trg)
    rhs = rhs_builder.build()
    mapping = PartialMorphism(lhs, rhs, {"a": "a", "b": "b"}, {})
    return Rule(name, lhs, rhs, mapping)


def _mirror(rule: Rule, kind: str) -> tuple[Rule, str]:
    """Swap success and failure throughout the right-hand side."""
    swap = {SUCCESS: FAILURE, FAILURE: SUCCESS}
    flipped = {SUCCESS: "failure", FAILURE: "success"}
    new_edges = [
        (eid, swap.get(e.type, e.type), e.src, e.trg)
        for eid, e in sorted(rule.rhs.edges.items())
    ]
    new_nodes = [
        (nid, t) for nid, t in sorted(rule.rhs.nodes.items()) if nid not in ("a", "b")
    ]
    name = rule.name
    for old, new in (("success", "\0"), ("failure", "success"), ("\0", "failure")):
        name = name.replace(old, new)
    return _make_rule(name, new_nodes, new_edges), kind


@lru_cache(maxsize=1)
def _rules_with_kinds() -> tuple[tuple[Rule, str], ...]:
    out: list[tuple[Rule, str]] = []

    out.append(
        (
            _make_rule(
                "insert-node",
                [("n", CF_NODE)],
                [("e1", NEXT, "a", "n"), ("e2", NEXT, "n", "b")],
            ),
            KIND_SEQUENTIAL,
        )
    )

    # branches rejoin at b; the success branch carries one story node,
    # failure skips straight to the join (if-then, no else)
    out.append(
        (
            _make_rule(
                "if-then",
                [("c", CF_NODE), ("s", CF_NODE)],
                [
                    ("e1", NEXT, "a", "c"),
                    ("e2", SUCCESS, "c", "s"),
                    ("e3", NEXT, "s", "b"),
                    ("e4", FAILURE, "c", "b"),
                ],
            ),
            KIND_JOINING,
        )
    )

    # non-joining conditionals: one branch continues to b, the other
    # dead-ends in a fresh stop node, bare or behind one story node
    for base in (
        _make_rule(
            "branch-failure-stop",
            [("c", CF_NODE), ("t", STOP_NODE)],
            [
                ("e1", NEXT, "a", "c"),
                ("e2", SUCCESS, "c", "b"),
                ("e3", FAILURE, "c", "t"),
            ],
        ),
        _make_rule(
            "branch-failure-node-stop",
            [("c", CF_NODE), ("f", CF_NODE), ("t", STOP_NODE)],
            [
                ("e1", NEXT, "a", "c"),
                ("e2", SUCCESS, "c", "b"),
                ("e3", FAILURE, "c", "f"),
                ("e4", NEXT, "f", "t"),
            ],
        ),
    ):
        out.append((base, KIND_NONJOINING))
        out.append(_mirror(base, KIND_NONJOINING))

    # head-controlled loops; the exit edge either continues directly to
    # b or passes through one story node first
    for base in (
        _make_rule(
            "while-success-direct",
            [("c", CF_NODE)],
            [
                ("e1", NEXT, "a", "c"),
                ("e2", SUCCESS, "c", "c"),
                ("e3", FAILURE, "c", "b"),
            ],
        ),
        _make_rule(
            "while-success-body",
            [("c", CF_NODE), ("x", CF_NODE)],
            [
                ("e1", NEXT, "a", "c"),
                ("e2", SUCCESS, "c", "x"),
                ("e3", NEXT, "x", "c"),
                ("e4", FAILURE, "c", "b"),
            ],
        ),
        _make_rule(
            "while-success-direct-exit-node",
            [("c", CF_NODE), ("f", CF_NODE)],
            [
                ("e1", NEXT, "a", "c"),
                ("e2", SUCCESS, "c", "c"),
                ("e3", FAILURE, "c", "f"),
                ("e4", NEXT, "f", "b"),
            ],
        ),
        _make_rule(
            "while-success-body-two",
            [("c", CF_NODE), ("x1", CF_NODE), ("x2", CF_NODE)],
            [
                ("e1", NEXT, "a", "c"),
                ("e2", SUCCESS, "c", "x1"),
                ("e3", NEXT, "x1", "x2"),
                ("e4", NEXT, "x2", "c"),
                ("e5", FAILURE, "c", "b"),
            ],
        ),
        _make_rule(
            "while-success-body-exit-node",
            [("c", CF_NODE), ("x", CF_NODE), ("f", CF_NODE)],
            [
                ("e1", NEXT, "a", "c"),
                ("e2", SUCCESS, "c", "x"),
                ("e3", NEXT, "x", "c"),
                ("e4", FAILURE, "c", "f"),
                ("e5", NEXT, "f", "b"),
            ],
        ),
    ):
        out.append((base, KIND_WHILE))
        out.append(_mirror(base, KIND_WHILE))

    return tuple(out)


def syntax_rules() -> tuple[Rule, ...]:
    """The sixteen construction rules, deterministic order."""
    return tuple(rule for rule, _ in _rules_with_kinds())


def rule_kinds() -> dict[str, str]:
    """Rule name to category: sequential, joining, non-joining, while."""
    return {rule.name: kind for rule, kind in _rules_with_kinds()}


def syntax_grammar() -> GraphGrammar:
    return GraphGrammar(start_graph(), syntax_rules())


def export_rules(directory: str) -> list[str]:
    """Write each rule to <directory>/<name>.json; returns the paths."""
    os.makedirs(directory, exist_ok=True)
    paths = []
    for rule in syntax_rules():
        path = os.path.join(directory, f"{rule.name}.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(rule_to_dict(rule), fh, indent=2, sort_keys=True)
            fh.write("\n")
        paths.append(path)
    return paths


@dataclass(slots=True)
class DerivationStep:
    """One forward construction step: rule applied at the edge a -> b.

    `created` names the images the inserted nodes carry in the validated
    graph, keyed by right-hand-side id, so a replay can translate later
    steps that hang new material off earlier insertions.
    """

    rule: str
    a: str
    b: str
    created: dict[str, str] = field(default_factory=dict)


@dataclass(slots=True)
class CfgValidation:
    """Result of control-flow validation, with a derivation witness."""

    ok: bool
    reason: str = ""
    derivation: list[DerivationStep] = field(default_factory=list)
    base: Optional[TypedGraph] = None  # the embedded copy of the start graph


def _undo_application(
    rule: Rule,
    node_map: dict[str, str],
    edge_map: dict[str, str],
    g: TypedGraph,
    restore_id: str,
) -> TypedGraph:
    drop_nodes = {node_map[n] for n in rule.rhs.nodes if n not in ("a", "b")}
    drop_edges = set(edge_map.values())
    nodes = {n: t for n, t in g.nodes.items() if n not in drop_nodes}
    edges = {e: d for e, d in g.edges.items() if e not in drop_edges}
    edges[restore_id] = Edge(NEXT, node_map["a"], node_map["b"])
    return TypedGraph(g.tg, nodes, edges)


def validate_control_flow(g: TypedGraph) -> CfgValidation:
    """Decide grammar membership by reducing g back to the start graph.

    Each reduction inverts one rule: it needs an injective image of the
    rule's right-hand side whose created nodes carry exactly their
    in-rule edges, removes that material, and restores the matched next
    edge. Every inverse strictly shrinks the graph, so the search is
    bounded; it backtracks over all rules and matches with an
    isomorphism-keyed memo of dead ends.
    """
    report = validate_typing(g, SYNTAX_TYPE_GRAPH)
    if not report.ok:
        return CfgValidation(False, "; ".join(report.violations))
    if ABSTRACT in g.nodes.values():
        return CfgValidation(False, "abstract node type instantiated")

    target = start_graph()
    rules = sorted(
        syntax_rules(), key=lambda r: (-len(r.rhs.nodes), -len(r.rhs.edges), r.name)
    )
    failed: dict[tuple, list[TypedGraph]] = {}
    restore_counter = [0]

    def known_failure(cur: TypedGraph) -> bool:
        bucket = failed.get(iso_signature(cur), [])
        return any(find_isomorphism(cur, seen) for seen in bucket)

    def search(cur: TypedGraph) -> Optional[tuple[TypedGraph, list[DerivationStep]]]:
        if len(cur.nodes) == len(target.nodes):
            if find_isomorphism(cur, target):
                return cur, []
            return None
        if len(cur.nodes) < len(target.nodes) or known_failure(cur):
            return None
        for rule in rules:
            created = [n for n in rule.rhs.node_ids() if n not in ("a", "b")]
            for node_map, edge_map in _enumerate_monos(rule.rhs, cur, {}):
                # inverse is exact only if each created-node image has no
                # incident edges beyond the matched rule edges
                exact = True
                for rn in created:
                    image = node_map[rn]
                    incident = sum(
                        1
                        for e in cur.edges.values()
                        if e.src == image or e.trg == image
                    )
                    wanted = sum(
                        1
                        for e in rule.rhs.edges.values()
                        if e.src == rn or e.trg == rn
                    )
                    if incident != wanted:
                        exact = False
                        break
                if not exact:
                    continue
                restore_counter[0] += 1
                reduced = _undo_application(
                    rule, node_map, edge_map, cur, f"r#{restore_counter[0]}"
                )
                found = search(reduced)
                if found is not None:
                    base, steps = found
                    steps.append(
                        DerivationStep(
                            rule.name,
                            node_map["a"],
                            node_map["b"],
                            {n: node_map[n] for n in created},
                        )
                    )
                    return base, steps
        failed.setdefault(iso_signature(cur), []).append(cur)
        return None

    found = search(g)
    if found is None:
        return CfgValidation(False, "not reducible to the start graph")
    base, steps = found
    return CfgValidation(True, derivation=steps, base=base)


def replay_derivation(validation: CfgValidation) -> TypedGraph:
    """Re-run a derivation witness forward from its embedded base graph.

    Re-application mints fresh node ids, so step anchors recorded against
    the validated graph are translated through the created-node images as
    the replay goes.
    """
    if not validation.ok or validation.base is None:
        raise GraphError("cannot replay an invalid derivation")
    by_name = {r.name: r for r in syntax_rules()}
    g = validation.base
    rename = {n: n for n in g.nodes}
    for step in validation.derivation:
        rule = by_name[step.rule]
        anchors = {"a": rename[step.a], "b": rename[step.b]}
        matches = find_matches(rule, g, partial=anchors)
        if not matches:
            raise GraphError(f"derivation step {step} does not apply")
        out = apply_rule(rule, matches[0], g)
        g = out.result
        for rhs_id, original in step.created.items():
            rename[original] = out.rhs_node_map[rhs_id]
    return g


@dataclass(slots=True)
class NodeClassification:
    """Per-story-node control-flow roles in a validated graph."""

    kinds: dict[str, str]
    joins: dict[str, str]  # joining conditional -> join node
    branch_stops: dict[str, dict[str, set[str]]]  # non-joining -> polarity -> stops
    branch_members: dict[str, dict[str, set[str]]]  # conditional -> polarity -> nodes
    start: str
    first: str  # the node the start edge points at


def _reach(g: TypedGraph, sources: list[str], blocked: set[str]) -> set[str]:
    seen: set[str] = set()
    stack = [s for s in sources if s not in blocked]
    while stack:
        n = stack.pop()
        if n in seen:
            continue
        seen.add(n)
        for _, e in g.out_edges(n):
            if e.trg not in blocked and e.trg not in seen:
                stack.append(e.trg)
    return seen


def classify_nodes(g: TypedGraph) -> NodeClassification:
    """Assign every story node its role; requires a validated graph."""
    starts = [n for n, t in g.nodes.items() if t == START_NODE]
    if len(starts) != 1:
        raise GraphError("classification needs exactly one start node")
    start = starts[0]
    start_out = [e for _, e in g.out_edges(start)]
    if len(start_out) != 1 or start_out[0].type != NEXT:
        raise GraphError("start node must have one outgoing next edge")
    first = start_out[0].trg

    preds: dict[str, set[str]] = {n: set() for n in g.nodes}
    for e in g.edges.values():
        preds[e.trg].add(e.src)

    # iterative dominator sets over the flow from the start node
    order = sorted(_reach(g, [start], set()))
    dom: dict[str, set[str]] = {n: set(order) for n in order}
    dom[start] = {start}
    changed = True
    while changed:
        changed = False
        for n in order:
            if n == start:
                continue
            incoming = [dom[p] for p in preds[n] if p in dom]
            new = set.intersection(*incoming) | {n} if incoming else {n}
            if new != dom[n]:
                dom[n] = new
                changed = True

    kinds: dict[str, str] = {}
    joins: dict[str, str] = {}
    branch_stops: dict[str, dict[str, set[str]]] = {}
    branch_members: dict[str, dict[str, set[str]]] = {}

    def cf_only(nodes: set[str]) -> set[str]:
        return {n for n in nodes if g.nodes[n] == CF_NODE}

    for n in sorted(g.nodes):
        if g.nodes[n] != CF_NODE:
            continue
        outs = list(g.out_edges(n))
        types = sorted(e.type for _, e in outs)
        if types == [NEXT]:
            kinds[n] = SEQUENTIAL
            continue
        if types != [FAILURE, SUCCESS]:
            raise GraphError(f"node {n!r} has malformed outgoing edges {types}")
        succ_target = next(e.trg for _, e in outs if e.type == SUCCESS)
        fail_target = next(e.trg for _, e in outs if e.type == FAILURE)

        back_sources = [u for u in preds[n] if n in dom.get(u, set())]
        if back_sources:
            # natural loop: n plus everything reaching a back-edge
            # source against the flow without crossing n
            natural = {n}
            worklist = [u for u in back_sources if u != n]
            while worklist:
                w = worklist.pop()
                if w in natural:
                    continue
                natural.add(w)
                worklist.extend(p for p in preds[w] if p != n)
            in_loop_succ = succ_target in natural
            in_loop_fail = fail_target in natural
            if in_loop_succ == in_loop_fail:
                raise GraphError(f"cannot orient loop at {n!r}")
            polarity = SUCCESS if in_loop_succ else FAILURE
            other = FAILURE if in_loop_succ else SUCCESS
            kinds[n] = (
                LOOP_HEAD_SUCCESS if polarity == SUCCESS else LOOP_HEAD_FAILURE
            )
            branch_members[n] = {
                polarity: cf_only(natural - {n}),
                other: set(),
            }
            continue

        r_succ = _reach(g, [succ_target], {n})
        r_fail = _reach(g, [fail_target], {n})
        common = r_succ & r_fail
        if not common:
            kinds[n] = COND_NONJOINING
            branch_members[n] = {
                SUCCESS: cf_only(r_succ),
                FAILURE: cf_only(r_fail),
            }
            branch_stops[n] = {
                SUCCESS: {m for m in r_succ if g.nodes[m] == STOP_NODE},
                FAILURE: {m for m in r_fail if g.nodes[m] == STOP_NODE},
            }
        else:
            candidates = sorted(
                j for j in common if not (preds[j] - {n}) & common
            )
            if len(candidates) != 1:
                raise GraphError(f"no unique join node for conditional {n!r}")
            join = candidates[0]
            kinds[n] = COND_JOINING
            joins[n] = join
            branch_members[n] = {
                SUCCESS: cf_only(_reach(g, [succ_target], {n, join})),
                FAILURE: cf_only(_reach(g, [fail_target], {n, join})),
            }

    return NodeClassification(
        kinds=kinds,
        joins=joins,
        branch_stops=branch_stops,
        branch_members=branch_members,
        start=start,
        first=first,
    )


def branch_targets(g: TypedGraph, n: str) -> tuple[str, str]:
    """(success target, failure target) of a conditional node."""
    succ = fail = None
    for _, e in g.out_edges(n):
        if e.type == SUCCESS:
            succ = e.trg
        elif e.type == FAILURE:
            fail = e.trg
    if succ is None or fail is None:
        raise GraphError(f"node {n!r} is not a conditional")
    return succ, fail


def next_target(g: TypedGraph, n: str) -> str:
    for _, e in g.out_edges(n):
        if e.type == NEXT:
            return e.trg
    raise GraphError(f"node {n!r} has no next edge")
