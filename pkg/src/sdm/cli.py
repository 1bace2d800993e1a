"""Command line front end.

Subcommands: validate a story-diagram file, run one against a model,
enumerate the control-flow language, and cross-check a run against the
denotational oracle. Exit codes are a contract: 0 ok, 2 invalid
diagram or usage, 3 unreadable or malformed input, 4 runtime pattern
failure, 5 step budget exhausted, 6 oracle refusal, 1 undocumented
oracle disagreement.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Optional

from .denot import OracleError, cross_check
from .diagram import DiagramError, load_story_diagram
from .graph import FormatError, GraphError, parse_graph, serialize_graph
from .interp import ERROR, NONTERMINATING, TERMINATED, initialize, run
from .rewrite import enumerate_language
from .syntax import syntax_grammar

EXIT_OK = 0
EXIT_DISAGREEMENT = 1
EXIT_INVALID = 2
EXIT_INPUT = 3
EXIT_PATTERN_FAILED = 4
EXIT_BUDGET = 5
EXIT_ORACLE_REFUSED = 6


def _load_diagram(path: str) -> tuple[Optional[object], int]:
    try:
        return load_story_diagram(path), EXIT_OK
    except (OSError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return None, EXIT_INPUT
    except DiagramError as exc:
        print(f"invalid diagram: {exc}", file=sys.stderr)
        return None, EXIT_INVALID


def cmd_validate(args: argparse.Namespace) -> int:
    d, code = _load_diagram(args.diagram)
    if d is None:
        return code
    print(f"valid: control flow graph with {len(d.cfg.nodes)} nodes")
    if d.validation.derivation:
        print("derivation witness:")
        for step in d.validation.derivation:
            print(f"  {step.rule} at ({step.a}, {step.b})")
    else:
        print("derivation witness: the start graph itself")
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    d, code = _load_diagram(args.diagram)
    if d is None:
        return code
    try:
        with open(args.model, encoding="utf-8") as fh:
            model = parse_graph(fh.read(), d.tg)
    except (OSError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        c = initialize(
            d,
            model,
            args.this,
            strategy=args.strategy,
            match_order=args.match_order,
            seed=args.seed,
        )
    except GraphError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT

    c, trace = run(c, max_steps=args.max_steps)

    # outputs are written for every status: error and budget states are
    # just as inspectable as success
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(serialize_graph(c.model) + "\n")
    with open(args.trace, "w", encoding="utf-8") as fh:
        fh.write(trace.to_jsonl())
    if args.state:
        with open(args.state, "w", encoding="utf-8") as fh:
            fh.write(serialize_graph(c.state_graph()) + "\n")

    if c.status == TERMINATED:
        print(f"terminated after {c.steps_taken} steps")
        return EXIT_OK
    if c.status == ERROR:
        print(f"pattern failed at node {c.failed_node}")
        return EXIT_PATTERN_FAILED
    if c.status == NONTERMINATING:
        print(f"step budget of {args.max_steps} exhausted")
        return EXIT_BUDGET
    raise AssertionError(f"unexpected status {c.status!r}")


def cmd_enumerate(args: argparse.Namespace) -> int:
    result = enumerate_language(syntax_grammar(), args.max_nodes)
    for g in result.graphs:
        print(json.dumps(g.to_dict(), sort_keys=True))
    print(f"count: {len(result.graphs)}")
    return EXIT_OK


def cmd_oracle(args: argparse.Namespace) -> int:
    d, code = _load_diagram(args.diagram)
    if d is None:
        return code
    try:
        with open(args.model, encoding="utf-8") as fh:
            model = parse_graph(fh.read(), d.tg)
    except (OSError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        c = initialize(d, model, args.this, strategy=args.strategy)
    except GraphError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    c, trace = run(c, max_steps=args.max_steps)
    try:
        verdict = cross_check(
            d, model, args.this, trace, model_bound=args.model_bound
        )
    except OracleError as exc:
        print(f"oracle refused: {exc}", file=sys.stderr)
        return EXIT_ORACLE_REFUSED
    for note in verdict.divergences:
        print(f"documented divergence: {note}")
    for note in verdict.notes:
        print(note)
    if verdict.pair_checked:
        print(f"semantics size: {verdict.sem_size} pairs")
    if not verdict.ok:
        print("undocumented disagreement", file=sys.stderr)
        return EXIT_DISAGREEMENT
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sdm",
        description="Execute and check story diagrams over typed graphs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a story-diagram file")
    p.add_argument("diagram")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="execute a story diagram on a model")
    p.add_argument("diagram")
    p.add_argument("model")
    p.add_argument("--this", required=True, help="model node bound to `this`")
    p.add_argument(
        "--strategy",
        choices=["conservative", "optimistic"],
        default="conservative",
    )
    p.add_argument("--match-order", choices=["lex", "random"], default="lex")
    p.add_argument("--seed", type=int)
    p.add_argument("--max-steps", type=int, default=10000)
    p.add_argument("--out", default="out.json", help="final model file")
    p.add_argument("--trace", default="trace.jsonl", help="trace file")
    p.add_argument("--state", help="also write the final execution state graph")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("enumerate", help="list the control-flow language")
    p.add_argument("--max-nodes", type=int, required=True)
    p.set_defaults(func=cmd_enumerate)

    p = sub.add_parser("oracle", help="cross-check a run denotationally")
    p.add_argument("diagram")
    p.add_argument("model")
    p.add_argument("--this", required=True)
    p.add_argument(
        "--strategy",
        choices=["conservative", "optimistic"],
        default="conservative",
    )
    p.add_argument("--max-steps", type=int, default=10000)
    p.add_argument("--model-bound", type=int, default=6)
    p.set_defaults(func=cmd_oracle)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "run":
        if (args.match_order == "random") != (args.seed is not None):
            parser.error("--seed is required exactly when --match-order random")
    if args.command == "enumerate" and args.max_nodes < 3:
        parser.error("--max-nodes must be at least 3")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
