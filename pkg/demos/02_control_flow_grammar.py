"""Enumerate the control-flow language and validate a member by reduction.

Run from the repository root:  python3 demos/02_control_flow_grammar.py
"""

from collections import Counter

from sdm import (
    TypedGraph,
    enumerate_language,
    syntax_grammar,
    validate_control_flow,
)
from sdm.syntax import rule_kinds

result = enumerate_language(syntax_grammar(), 5)
sizes = Counter(len(g.nodes) for g in result.graphs)
print(f"language members with at most 5 nodes: {len(result.graphs)}")
for size in sorted(sizes):
    print(f"  {sizes[size]} graph(s) with {size} nodes")

print("\nrule kinds:", dict(Counter(rule_kinds().values())))

# pick the largest member and show its derivation witness
largest = max(result.graphs, key=lambda g: (len(g.nodes), sorted(g.nodes)))
verdict = validate_control_flow(largest)
print(f"\nvalidating a {len(largest.nodes)}-node member: ok={verdict.ok}")
for step in verdict.derivation:
    print(f"  apply {step.rule} at anchors ({step.a}, {step.b})")

# break it and watch the validator refuse
broken = TypedGraph(
    largest.tg,
    dict(largest.nodes),
    {eid: e for eid, e in largest.edges.items() if e.type != "next"},
)
verdict = validate_control_flow(broken)
print(f"\nafter dropping every next edge: ok={verdict.ok} ({verdict.reason})")
