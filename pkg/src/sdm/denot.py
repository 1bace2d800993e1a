"""Denotational semantics of story diagrams as a brute-force oracle.

The meaning of a construct is a finite set of (input, output) graph
pairs: one pair per rule application chain, with inapplicable rules
passing the graph through unchanged. Conditionals pick their branch by
applicability, while loops unroll to a bound and admit being
incomplete. Bindings and scopes do not exist at this level, which is
exactly what makes the comparison against the step interpreter
interesting: the two semantics agree on all-success runs and diverge
in documented ways around failures.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

from .diagram import StoryDiagram
from .graph import (
    GraphError,
    PartialMorphism,
    TypedGraph,
    find_isomorphism,
    iso_signature,
)
from .interp import Trace
from .rewrite import Match, Rule, apply_rule, find_matches
from .syntax import (
    COND_JOINING,
    COND_NONJOINING,
    LOOP_HEAD_FAILURE,
    LOOP_HEAD_SUCCESS,
    SEQUENTIAL,
    STOP_NODE,
    branch_targets,
    next_target,
)

DEFAULT_MODEL_BOUND = 6
DEFAULT_UNROLL_DEPTH = 20


class OracleError(GraphError):
    """The oracle refuses the instance (too large, or out of scope)."""


class SemSet:
    """Pairs of (input, output) graphs, deduplicated componentwise.

    Two pairs collide when their inputs are isomorphic and their
    outputs are isomorphic. `incomplete` records that some while-loop
    unrolling hit the depth bound, so absence from the set proves
    nothing.
    """

    def __init__(self, incomplete: bool = False) -> None:
        self.incomplete = incomplete
        self._buckets: dict[tuple[str, str], list[tuple[TypedGraph, TypedGraph]]] = {}
        self._size = 0

    def _key(self, g: TypedGraph, h: TypedGraph) -> tuple[str, str]:
        return (iso_signature(g), iso_signature(h))

    def add(self, g: TypedGraph, h: TypedGraph) -> None:
        if self.contains(g, h):
            return
        self._buckets.setdefault(self._key(g, h), []).append((g, h))
        self._size += 1

    def contains(self, g: TypedGraph, h: TypedGraph) -> bool:
        for g2, h2 in self._buckets.get(self._key(g, h), []):
            if find_isomorphism(g, g2) and find_isomorphism(h, h2):
                return True
        return False

    def pairs(self) -> list[tuple[TypedGraph, TypedGraph]]:
        return [p for bucket in self._buckets.values() for p in bucket]

    def __len__(self) -> int:
        return self._size

    def __repr__(self) -> str:
        flag = ", incomplete" if self.incomplete else ""
        return f"SemSet({self._size} pairs{flag})"


# -- denotational expressions ------------------------------------------------


@dataclass(slots=True)
class NodeExpr:
    rule: Rule


@dataclass(slots=True)
class SeqExpr:
    parts: list["DenotExpr"]


@dataclass(slots=True)
class IfExpr:
    cond: Rule
    then: "DenotExpr"
    orelse: "DenotExpr"


@dataclass(slots=True)
class WhileExpr:
    cond: Rule
    body: "DenotExpr"


DenotExpr = Union[NodeExpr, SeqExpr, IfExpr, WhileExpr]


def compile_diagram(d: StoryDiagram) -> DenotExpr:
    """Turn a classified diagram into a denotational expression tree."""
    cls = d.classification
    cfg = d.cfg

    def rule_at(node: str) -> Rule:
        return d.pattern_at(node).rule

    def region(node: str, stop_at: Optional[str]) -> SeqExpr:
        parts: list[DenotExpr] = []
        while node != stop_at and cfg.nodes[node] != STOP_NODE:
            kind = cls.kinds[node]
            if kind == SEQUENTIAL:
                parts.append(NodeExpr(rule_at(node)))
                node = next_target(cfg, node)
            elif kind == COND_JOINING:
                join = cls.joins[node]
                succ, fail = branch_targets(cfg, node)
                parts.append(
                    IfExpr(rule_at(node), region(succ, join), region(fail, join))
                )
                node = join
            elif kind == COND_NONJOINING:
                succ, fail = branch_targets(cfg, node)
                parts.append(
                    IfExpr(rule_at(node), region(succ, None), region(fail, None))
                )
                break  # both branches end at their own stop nodes
            elif kind == LOOP_HEAD_SUCCESS:
                succ, fail = branch_targets(cfg, node)
                parts.append(WhileExpr(rule_at(node), region(succ, node)))
                node = fail
            elif kind == LOOP_HEAD_FAILURE:
                raise OracleError(
                    f"loop at {node!r} recurs along failure; the denotational "
                    "while formula only handles looping along success"
                )
            else:
                raise GraphError(f"unclassified node {node!r}")
        return SeqExpr(parts)

    return region(cls.first, None)


def _compose(left: SemSet, expr: DenotExpr, depth: int) -> SemSet:
    out = SemSet(incomplete=left.incomplete)
    for g, h in left.pairs():
        right = evaluate(expr, h, depth)
        out.incomplete = out.incomplete or right.incomplete
        for _, h2 in right.pairs():
            out.add(g, h2)
    return out


def evaluate(expr: DenotExpr, g: TypedGraph, depth: int = DEFAULT_UNROLL_DEPTH) -> SemSet:
    """The pair set of expr on input g, unrolling loops at most depth times."""
    if isinstance(expr, NodeExpr):
        return sem_node(expr.rule, g)
    if isinstance(expr, SeqExpr):
        out = SemSet()
        out.add(g, g)
        for part in expr.parts:
            out = _compose(out, part, depth)
        return out
    if isinstance(expr, IfExpr):
        entry = sem_node(expr.cond, g)  # {(g,g)} when inapplicable
        branch = expr.then if find_matches(expr.cond, g) else expr.orelse
        return _compose(entry, branch, depth)
    if isinstance(expr, WhileExpr):
        if not find_matches(expr.cond, g):
            out = SemSet()
            out.add(g, g)
            return out
        if depth == 0:
            return SemSet(incomplete=True)
        one_pass = _compose(sem_node(expr.cond, g), expr.body, depth)
        out = SemSet(incomplete=one_pass.incomplete)
        for _, g2 in one_pass.pairs():
            rest = evaluate(expr, g2, depth - 1)
            out.incomplete = out.incomplete or rest.incomplete
            for _, h in rest.pairs():
                out.add(g, h)
        return out
    raise GraphError(f"unknown expression {expr!r}")


# -- single-rule operator forms ----------------------------------------------


def sem_node(r: Rule, g: TypedGraph) -> SemSet:
    """One pair per match of r in g; {(g,g)} when r is inapplicable."""
    out = SemSet()
    matches = find_matches(r, g)
    if not matches:
        out.add(g, g)
        return out
    for m in matches:
        out.add(g, apply_rule(r, m, g).result)
    return out


def sem_seq(rules: list[Rule], g: TypedGraph) -> SemSet:
    if not rules:
        raise GraphError("sem_seq needs a nonempty chain")
    return evaluate(SeqExpr([NodeExpr(r) for r in rules]), g)


def sem_if(r1: Rule, r2: Rule, r3: Rule, g: TypedGraph) -> SemSet:
    return evaluate(IfExpr(r1, NodeExpr(r2), NodeExpr(r3)), g)


def sem_while(r1: Rule, r2: Rule, g: TypedGraph, depth_bound: int) -> SemSet:
    if depth_bound < 0:
        raise GraphError("depth_bound must be nonnegative")
    return evaluate(WhileExpr(r1, NodeExpr(r2)), g, depth_bound)


# -- cross-checking the step interpreter -------------------------------------


@dataclass(slots=True)
class Verdict:
    ok: bool
    notes: list[str] = field(default_factory=list)
    divergences: list[str] = field(default_factory=list)
    pair_checked: bool = False
    pair_found: Optional[bool] = None
    sem_size: int = 0
    incomplete: bool = False


def cross_check(
    d: StoryDiagram,
    model: TypedGraph,
    this_node: str,
    trace: Trace,
    model_bound: int = DEFAULT_MODEL_BOUND,
    depth: int = DEFAULT_UNROLL_DEPTH,
) -> Verdict:
    """Compare a recorded run against the denotational pair set.

    All-success runs must produce a pair in the set. A failed
    sequential invocation and a conditional whose failure was caused
    only by pinned bindings are documented divergences, reported but
    not failures. The model size bound keeps the brute force honest.
    """
    if len(model.nodes) > model_bound:
        raise OracleError(
            f"model has {len(model.nodes)} nodes, oracle bound is {model_bound}"
        )
    expr = compile_diagram(d)  # refuses failure-recurring loops

    v = Verdict(ok=True)
    kinds = d.classification.kinds
    g = model
    terminated = False
    for ts in trace.steps:
        if ts.outcome == "terminated":
            terminated = True
            continue
        rule = d.pattern_at(ts.node).rule
        if ts.outcome == "failed":
            if kinds[ts.node] == SEQUENTIAL:
                v.divergences.append(
                    f"sequential pattern failed at {ts.node!r}: the step "
                    "semantics aborts, the denotational semantics passes the "
                    "graph through"
                )
            elif find_matches(rule, g):
                v.divergences.append(
                    f"conditional {ts.node!r} failed only under its pinned "
                    "bindings; the denotational semantics, which has no "
                    "bindings, would take the success branch"
                )
            continue
        morphism = PartialMorphism(rule.lhs, g, ts.match_nodes, ts.match_edges)
        g = apply_rule(rule, Match(rule, morphism, g.revision), g).result

    if v.divergences:
        v.notes.append("documented divergence; membership not required")
        return v
    if not terminated:
        v.notes.append("run did not terminate; no final pair to check")
        return v

    sem = evaluate(expr, model, depth)
    v.sem_size = len(sem)
    v.incomplete = sem.incomplete
    v.pair_checked = True
    v.pair_found = sem.contains(model, g)
    if v.pair_found:
        v.notes.append("pair is in the composed semantics")
    elif sem.incomplete:
        v.ok = True
        v.pair_checked = False
        v.notes.append(
            "pair not found but the semantics is incomplete at this depth"
        )
    else:
        v.ok = False
        v.notes.append("pair missing from the composed semantics")
    return v
