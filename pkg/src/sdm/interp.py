"""Step interpreter for story diagrams.

Execution walks the position token over the control-flow graph. Each
step invokes the pattern at the token's node against the model,
applies one semantic transition (token shift, branch-scope creation,
binding updates, join policy), and appends one trace record. The whole
run is deterministic for a fixed match-order mode and seed.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from typing import Optional

from .diagram import (
    ROOT_SCOPE,
    CFVariable,
    ScopeTree,
    StoryDiagram,
    analyze_scopes,
)
from .graph import (
    Edge,
    EdgeType,
    GraphError,
    PartialMorphism,
    TypedGraph,
    TypeGraph,
)
from .rewrite import Match, apply_rule, find_matches
from .syntax import (
    ABSTRACT,
    CF_NODE,
    FAILURE,
    NEXT,
    SEQUENTIAL,
    START_NODE,
    STOP_NODE,
    SUCCESS,
    branch_targets,
    next_target,
)

RUNNING = "running"
TERMINATED = "terminated"
ERROR = "error"
NONTERMINATING = "nonterminating"

CONSERVATIVE = "conservative"
OPTIMISTIC = "optimistic"

SCOPE_TYPE = "Scope"
CFVAR_TYPE = "CFVariable"
BINDING_TYPE = "VariableBinding"
VARIABLE_TYPE = "Variable"
TOKEN_TYPE = "PositionToken"
INVOCATION_TYPE = "PatternInvocation"


def semantic_type_graph() -> TypeGraph:
    """Joint type graph of control-flow syntax and execution state."""
    return TypeGraph(
        "ExecutionState",
        {
            ABSTRACT: None,
            CF_NODE: ABSTRACT,
            START_NODE: ABSTRACT,
            STOP_NODE: ABSTRACT,
            SCOPE_TYPE: None,
            CFVAR_TYPE: None,
            BINDING_TYPE: None,
            VARIABLE_TYPE: None,
            TOKEN_TYPE: None,
            INVOCATION_TYPE: None,
        },
        {
            NEXT: EdgeType(ABSTRACT, ABSTRACT),
            SUCCESS: EdgeType(ABSTRACT, ABSTRACT),
            FAILURE: EdgeType(ABSTRACT, ABSTRACT),
            "at": EdgeType(TOKEN_TYPE, ABSTRACT),
            "parentScope": EdgeType(SCOPE_TYPE, SCOPE_TYPE),
            "nodes": EdgeType(SCOPE_TYPE, ABSTRACT),
            "variables": EdgeType(SCOPE_TYPE, CFVAR_TYPE),
            "instanceOf": EdgeType(SCOPE_TYPE, SCOPE_TYPE),
            "inScope": EdgeType(BINDING_TYPE, SCOPE_TYPE),
            "forVariable": EdgeType(BINDING_TYPE, CFVAR_TYPE),
            "boundTo": EdgeType(BINDING_TYPE, VARIABLE_TYPE),
            "invocation": EdgeType(CF_NODE, INVOCATION_TYPE),
            "constructedVariables": EdgeType(INVOCATION_TYPE, CFVAR_TYPE),
            "destructedVariables": EdgeType(INVOCATION_TYPE, CFVAR_TYPE),
        },
    )


SEMANTIC_TYPE_GRAPH = semantic_type_graph()


@dataclass(slots=True)
class BindingRec:
    id: str
    cfvar: CFVariable
    var_node: str  # Variable proxy node id


@dataclass(slots=True)
class ScopeInstance:
    id: str
    template: str
    parent: Optional[str]
    bindings: dict[str, BindingRec] = field(default_factory=dict)


@dataclass(slots=True)
class InvocationRec:
    id: str
    node: str
    constructed: list[CFVariable]
    destructed: list[CFVariable]


@dataclass(slots=True)
class TraceStep:
    step: int
    node: str
    outcome: str  # matched | failed | terminated
    match: dict[str, str]  # variable name -> model node id
    constructed: list[str]
    destructed: list[str]
    scope_events: list[dict]
    model_rev: int
    rule: Optional[str] = None
    match_nodes: dict[str, str] = field(default_factory=dict)
    match_edges: dict[str, str] = field(default_factory=dict)

    def to_record(self) -> dict:
        return {
            "step": self.step,
            "node": self.node,
            "outcome": self.outcome,
            "match": [
                {"var": var, "model_node": node}
                for var, node in sorted(self.match.items())
            ],
            "constructed": self.constructed,
            "destructed": self.destructed,
            "scope_events": self.scope_events,
            "model_rev": self.model_rev,
        }


@dataclass(slots=True)
class Trace:
    steps: list[TraceStep]

    def to_jsonl(self) -> str:
        return "".join(
            json.dumps(s.to_record(), sort_keys=True) + "\n" for s in self.steps
        )


class Configuration:
    """Mutable execution state for one story-diagram run."""

    def __init__(
        self,
        diagram: StoryDiagram,
        scopes: ScopeTree,
        model: TypedGraph,
        strategy: str,
        match_order: str,
        rng: Optional[random.Random],
    ):
        self.diagram = diagram
        self.scopes = scopes
        self.model = model
        self.strategy = strategy
        self.match_order = match_order
        self.rng = rng
        self.status = RUNNING
        self.failed_node: Optional[str] = None
        self.token_at: str = diagram.classification.first
        self.token_attached = True
        self.instances: dict[str, ScopeInstance] = {}
        self.current = ""
        self.var_models: dict[str, str] = {}  # Variable node -> model node
        self.invocations: dict[str, InvocationRec] = {}
        self.trace: list[TraceStep] = []
        self.steps_taken = 0
        self.model_rev = 0
        self._counters = {"s": 0, "b": 0, "v": 0, "p": 0}

    def _fresh(self, kind: str) -> str:
        self._counters[kind] += 1
        return f"{kind}{self._counters[kind]}"

    # -- scope bookkeeping -------------------------------------------------

    def current_instance(self) -> ScopeInstance:
        return self.instances[self.current]

    def model_of(self, rec: BindingRec) -> str:
        return self.var_models[rec.var_node]

    def _variable_for(self, model_node: str) -> str:
        for var, target in self.var_models.items():
            if target == model_node:
                return var
        var = self._fresh("v")
        self.var_models[var] = model_node
        return var

    def _bind(self, instance: ScopeInstance, name: str, model_node: str) -> None:
        cfvar = self.scopes.resolve(instance.template, name)
        if cfvar is None:
            raise GraphError(
                f"no control flow variable {name!r} in scope of {instance.template!r}"
            )
        instance.bindings[name] = BindingRec(
            self._fresh("b"), cfvar, self._variable_for(model_node)
        )

    def _new_instance(self, template: str, parent: Optional[str]) -> ScopeInstance:
        inst = ScopeInstance(self._fresh("s"), template, parent)
        if parent is not None:
            for name, rec in sorted(self.instances[parent].bindings.items()):
                inst.bindings[name] = BindingRec(
                    self._fresh("b"), rec.cfvar, rec.var_node
                )
        self.instances[inst.id] = inst
        return inst

    def _pop_instance(self, events: list[dict]) -> None:
        exited = self.instances.pop(self.current)
        parent = self.instances[exited.parent]
        event = {
            "event": "exit",
            "scope": exited.id,
            "template": exited.template,
        }
        if self.strategy == CONSERVATIVE:
            removed = sorted(
                name for name in parent.bindings if name not in exited.bindings
            )
            for name in removed:
                del parent.bindings[name]
            event["removed"] = removed
        else:
            adopted = []
            for name, rec in sorted(exited.bindings.items()):
                parent.bindings[name] = BindingRec(
                    self._fresh("b"), rec.cfvar, rec.var_node
                )
                adopted.append(name)
            event["adopted"] = adopted
        events.append(event)
        self.current = exited.parent

    # -- views -------------------------------------------------------------

    def bindings_in_scope(self) -> dict[str, str]:
        """Variable name to model node id in the current instance."""
        return {
            name: self.model_of(rec)
            for name, rec in self.current_instance().bindings.items()
        }

    def state_graph(self) -> TypedGraph:
        """Materialize the execution state as a typed graph.

        The static scope templates appear alongside the runtime scope
        instances; instances point at their template and parent
        instance, bindings at scope, control flow variable, and model
        proxy. Discarded instances and their bindings are absent.
        """
        cfg = self.diagram.cfg
        nodes: dict[str, str] = dict(cfg.nodes)
        edges: dict[str, Edge] = dict(cfg.edges)
        nodes["token"] = TOKEN_TYPE
        if self.token_attached:
            edges["at"] = Edge("at", "token", self.token_at)
        for template in self.scopes.templates.values():
            nodes[template.id] = SCOPE_TYPE
            if template.parent is not None:
                edges[f"pt:{template.id}"] = Edge(
                    "parentScope", template.id, template.parent
                )
            for member in template.members:
                edges[f"m:{template.id}:{member}"] = Edge(
                    "nodes", template.id, member
                )
            for cfvar in template.declared.values():
                nodes[cfvar.id] = CFVAR_TYPE
                edges[f"v:{cfvar.id}"] = Edge("variables", template.id, cfvar.id)
        live_vars = set()
        for inst in self.instances.values():
            nodes[inst.id] = SCOPE_TYPE
            edges[f"io:{inst.id}"] = Edge("instanceOf", inst.id, inst.template)
            if inst.parent is not None:
                edges[f"ps:{inst.id}"] = Edge("parentScope", inst.id, inst.parent)
            for rec in inst.bindings.values():
                nodes[rec.id] = BINDING_TYPE
                live_vars.add(rec.var_node)
                edges[f"in:{rec.id}"] = Edge("inScope", rec.id, inst.id)
                edges[f"for:{rec.id}"] = Edge("forVariable", rec.id, rec.cfvar.id)
                edges[f"to:{rec.id}"] = Edge("boundTo", rec.id, rec.var_node)
        for var in sorted(live_vars):
            nodes[var] = VARIABLE_TYPE
        for inv in self.invocations.values():
            nodes[inv.id] = INVOCATION_TYPE
            edges[f"of:{inv.id}"] = Edge("invocation", inv.node, inv.id)
            for cfvar in inv.constructed:
                edges[f"c:{inv.id}:{cfvar.id}"] = Edge(
                    "constructedVariables", inv.id, cfvar.id
                )
            for cfvar in inv.destructed:
                edges[f"d:{inv.id}:{cfvar.id}"] = Edge(
                    "destructedVariables", inv.id, cfvar.id
                )
        return TypedGraph(SEMANTIC_TYPE_GRAPH, nodes, edges)


def initialize(
    d: StoryDiagram,
    model: TypedGraph,
    this_node: str,
    strategy: str = CONSERVATIVE,
    match_order: str = "lex",
    seed: Optional[int] = None,
) -> Configuration:
    """Create the initial configuration: root scope, this binding, token."""
    if model.tg != d.tg:
        raise GraphError("model is typed over a different type graph")
    if strategy not in (CONSERVATIVE, OPTIMISTIC):
        raise GraphError(f"unknown strategy {strategy!r}")
    if match_order not in ("lex", "random"):
        raise GraphError(f"unknown match order {match_order!r}")
    if (match_order == "random") != (seed is not None):
        raise GraphError("a seed is required exactly for random match order")
    name, this_type = d.params[0]
    if this_node not in model.nodes:
        raise GraphError(f"this node {this_node!r} is not in the model")
    if not model.tg.conforms(model.nodes[this_node], this_type):
        raise GraphError(
            f"this node {this_node!r} has type {model.nodes[this_node]!r}, "
            f"expected {this_type!r}"
        )
    scopes = analyze_scopes(d)
    rng = random.Random(seed) if match_order == "random" else None
    c = Configuration(d, scopes, model, strategy, match_order, rng)
    root = c._new_instance(ROOT_SCOPE, None)
    c.current = root.id
    c._bind(root, name, this_node)
    return c


@dataclass(slots=True)
class PatternInvocationResult:
    matched: bool
    match: Optional[Match] = None
    constructed: list[str] = field(default_factory=list)
    destructed: list[str] = field(default_factory=list)
    fresh: list[str] = field(default_factory=list)  # unbound lhs names matched


def invoke_pattern(c: Configuration) -> PatternInvocationResult:
    """Match the pattern at the token's node against the model.

    The pre-match pins every pattern variable whose name currently has a
    binding, whether or not it is statically marked bound: an existing
    binding means the variable is bound at runtime. A binding whose
    model node was deleted fails the invocation outright.
    """
    node = c.token_at
    pattern = c.diagram.pattern_at(node)
    env = c.current_instance().bindings
    partial: dict[str, str] = {}
    for lhs_node, name in sorted(pattern.lhs_names.items()):
        rec = env.get(name)
        if rec is None:
            if name in pattern.bound:
                raise GraphError(
                    f"bound variable {name!r} has no binding at node {node!r}"
                )
            continue
        model_node = c.model_of(rec)
        if model_node not in c.model.nodes:
            return PatternInvocationResult(matched=False)  # dangling binding
        partial[lhs_node] = model_node
    matches = find_matches(pattern.rule, c.model, partial=partial)
    if not matches:
        return PatternInvocationResult(matched=False)
    if c.match_order == "random":
        match = matches[c.rng.randrange(len(matches))]
    else:
        match = matches[0]
    fresh = sorted(
        pattern.lhs_names[l] for l in pattern.lhs_names if l not in partial
    )
    destructed = sorted(pattern.deleted_names())
    constructed = sorted(
        (set(fresh) - set(destructed)) | set(pattern.created_names())
    )
    return PatternInvocationResult(
        matched=True,
        match=match,
        constructed=constructed,
        destructed=destructed,
        fresh=fresh,
    )


def step(c: Configuration) -> Configuration:
    """Execute one semantic step at the token's node."""
    if c.status != RUNNING:
        raise GraphError(f"cannot step a configuration in status {c.status!r}")
    node = c.token_at
    c.steps_taken += 1
    node_type = c.diagram.cfg.nodes[node]

    if node_type == STOP_NODE:
        c.status = TERMINATED
        c.token_attached = False
        c.trace.append(
            TraceStep(
                c.steps_taken, node, "terminated", {}, [], [], [], c.model_rev
            )
        )
        return c

    # exiting branches: pop until the node's own template is current
    events: list[dict] = []
    target_template = c.scopes.node_template[node]
    while c.current_instance().template != target_template:
        if not c.scopes.is_strict_ancestor(
            target_template, c.current_instance().template
        ):
            raise GraphError(
                f"token at {node!r} in scope {target_template!r}, which is not "
                f"an ancestor of {c.current_instance().template!r}"
            )
        c._pop_instance(events)

    pattern = c.diagram.pattern_at(node)
    result = invoke_pattern(c)
    kind_branches = c.diagram.classification.kinds[node] != SEQUENTIAL

    match_by_name: dict[str, str] = {}
    rhs_node_map: dict[str, str] = {}
    if result.matched:
        out = apply_rule(pattern.rule, result.match, c.model)
        c.model = out.result
        c.model_rev += 1
        rhs_node_map = out.rhs_node_map
        match_by_name = {
            pattern.lhs_names[l]: h for l, h in result.match.node_map.items()
        }

    if kind_branches:
        polarity = SUCCESS if result.matched else FAILURE
        succ, fail = branch_targets(c.diagram.cfg, node)
        target = succ if result.matched else fail
        inst = c._new_instance(f"{node}:{polarity}", c.current)
        events.append(
            {"event": "enter", "scope": inst.id, "template": inst.template}
        )
        c.current = inst.id
        update_in = inst
    else:
        target = next_target(c.diagram.cfg, node) if result.matched else None
        update_in = c.current_instance()

    constructed_vars: list[CFVariable] = []
    destructed_vars: list[CFVariable] = []
    if result.matched:
        for name in result.constructed:
            if name in pattern.created_names():
                created_rhs = next(
                    r for r, n in pattern.rhs_names.items() if n == name
                )
                model_node = rhs_node_map[created_rhs]
            else:
                model_node = match_by_name[name]
            c._bind(update_in, name, model_node)
            constructed_vars.append(update_in.bindings[name].cfvar)
        for name in result.destructed:
            rec = update_in.bindings.pop(name, None)
            cfvar = rec.cfvar if rec else c.scopes.resolve(
                update_in.template, name
            )
            if cfvar is not None:
                destructed_vars.append(cfvar)

    inv = InvocationRec(
        c._fresh("p"), node, constructed_vars, destructed_vars
    )
    c.invocations[node] = inv

    if result.matched or kind_branches:
        c.token_at = target
    else:
        c.token_attached = False
        c.status = ERROR
        c.failed_node = node

    c.trace.append(
        TraceStep(
            c.steps_taken,
            node,
            "matched" if result.matched else "failed",
            match_by_name,
            result.constructed if result.matched else [],
            result.destructed if result.matched else [],
            events,
            c.model_rev,
            rule=pattern.rule.name,
            match_nodes=dict(result.match.node_map) if result.matched else {},
            match_edges=dict(result.match.edge_map) if result.matched else {},
        )
    )
    return c


def run(c: Configuration, max_steps: int = 10000) -> tuple[Configuration, Trace]:
    """Step until termination, error, or budget exhaustion."""
    if max_steps <= 0:
        raise GraphError("max_steps must be positive")
    while c.status == RUNNING and c.steps_taken < max_steps:
        step(c)
    if c.status == RUNNING:
        c.status = NONTERMINATING
    return c, Trace(c.trace)


def replay_trace(
    d: StoryDiagram, initial_model: TypedGraph, trace: Trace
) -> TypedGraph:
    """Re-apply the trace's recorded matches to the initial model."""
    g = initial_model
    for ts in trace.steps:
        if ts.outcome != "matched":
            continue
        rule = d.pattern_at(ts.node).rule
        morphism = PartialMorphism(rule.lhs, g, ts.match_nodes, ts.match_edges)
        g = apply_rule(rule, Match(rule, morphism, g.revision), g).result
    return g


def replay_trace_file(
    d: StoryDiagram, initial_model: TypedGraph, text: str
) -> TypedGraph:
    """Re-apply a serialized trace (JSONL) to the initial model.

    Trace files record node images only, so each step pins every
    pattern node to its recorded image and completes the edge mapping
    deterministically (lexicographically first match). The completion
    is unique unless the model has parallel edges between the same
    matched endpoints.
    """
    g = initial_model
    for line in text.splitlines():
        rec = json.loads(line)
        if rec["outcome"] != "matched":
            continue
        pattern = d.pattern_at(rec["node"])
        by_name = {m["var"]: m["model_node"] for m in rec["match"]}
        partial = {
            l: by_name[name] for l, name in pattern.lhs_names.items()
        }
        stale = any(h not in g.nodes for h in partial.values())
        matches = [] if stale else find_matches(pattern.rule, g, partial=partial)
        if not matches:
            raise GraphError(
                f"trace replay: recorded match at step {rec['step']} "
                f"(node {rec['node']!r}) no longer applies"
            )
        g = apply_rule(pattern.rule, matches[0], g).result
    return g
