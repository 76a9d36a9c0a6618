"""Command-line front end: ``aam [flags] PROGRAM``.

Exit status 0 means the run completed (a timeout or a stuck program is a
reported outcome, not a failure), 1 means a usage or parse error, and 2
means the analysis exceeded its node cap.
"""

from __future__ import annotations

import argparse
import os
import sys

from .abstract import policy_k_cfa, policy_zero_cfa
from .concrete import run_machine, state_sexp
from .domains import Stuck, Timeout
from .engine import DEFAULT_NODE_CAP, NodeCapExceeded, analyze, export_graph
from .reference import eval_reference
from .syntax import ParseError, UnboundVariableError, check_closed, is_pure, parse, unparse

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CAP = 2


class UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="aam",
        description="Run a program on a concrete machine or analyse it with an abstract one.",
    )
    p.add_argument("program", help="source file")
    p.add_argument("--mode", choices=["ref", "cek", "cesk", "analyze"], default="analyze")
    p.add_argument("--policy", choices=["0cfa", "kcfa"], default="0cfa")
    p.add_argument("--k", type=int, default=1, help="context depth for --policy kcfa (default 1)")
    p.add_argument("--gc", choices=["none", "free"], default="free")
    p.add_argument("--fuel", type=int, default=100_000, help="step limit for concrete modes")
    p.add_argument("--dot", metavar="PATH", help="write the state graph as DOT")
    p.add_argument("--json", metavar="PATH", help="write the state graph as JSON")
    p.add_argument("--trace", action="store_true", help="print every machine state to stdout")
    p.add_argument("--jobs", type=int, default=1, help="worker threads for analysis")
    return p


def _show(result) -> str:
    if isinstance(result, (Timeout, Stuck)):
        return str(result)
    if hasattr(result, "label"):
        return unparse(result)
    return str(result)


def _run_concrete(e, args) -> int:
    if args.dot or args.json:
        raise UsageError("--dot and --json apply to --mode analyze")
    if args.mode in ("ref", "cek"):
        if not is_pure(e):
            raise UsageError(f"--mode {args.mode} does not support set! or callcc")
    if args.mode == "ref":
        if args.trace:
            raise UsageError("--trace is not available for --mode ref")
        result = eval_reference(e, args.fuel)
    else:
        machine = "cek" if args.mode == "cek" else "cesk"
        gc = args.mode == "cesk" and args.gc == "free"
        run = run_machine(e, machine, args.fuel, gc=gc, keep_trace=args.trace)
        if args.trace:
            for s in run.trace:
                print(state_sexp(s))
        result = run.result
    print(f"result: {_show(result)}")
    return EXIT_OK


def _run_analysis(e, args) -> int:
    if args.policy == "0cfa":
        policy = policy_zero_cfa(e)
    else:
        if args.k < 0:
            raise UsageError("--k must be non-negative")
        policy = policy_k_cfa(e, args.k)
    if args.jobs < 1:
        raise UsageError("--jobs must be positive")
    cap = int(os.environ.get("AAM_NODE_CAP", DEFAULT_NODE_CAP))
    g = analyze(e, policy, gc=args.gc, node_cap=cap, jobs=args.jobs)
    if args.trace:
        for i, s in enumerate(g.nodes):
            print(f"{i}: {state_sexp(s)}")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            fh.write(export_graph(g, "json"))
    if args.dot:
        with open(args.dot, "w", encoding="utf-8") as fh:
            fh.write(export_graph(g, "dot"))
    st = g.stats
    print(
        f"nodes: {st['nodes']} edges: {st['edges']} "
        f"final: {st['final_nodes']} stuck: {st['stuck_nodes']}"
    )
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        if args.fuel < 1:
            raise UsageError("--fuel must be positive")
        if args.mode in ("ref", "cek") and args.gc == "free" and _gc_given(argv):
            raise UsageError(f"--gc free needs a store; --mode {args.mode} has none")
        try:
            with open(args.program, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise UsageError(f"cannot read {args.program}: {exc.strerror}") from None
        e = parse(text)
        check_closed(e)
        if args.mode == "analyze":
            return _run_analysis(e, args)
        return _run_concrete(e, args)
    except (UsageError, ParseError, UnboundVariableError) as exc:
        print(f"aam: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NodeCapExceeded as exc:
        print(f"aam: {exc}", file=sys.stderr)
        return EXIT_CAP


def _gc_given(argv) -> bool:
    argv = sys.argv[1:] if argv is None else argv
    return any(a == "--gc" or a.startswith("--gc=") for a in argv)


if __name__ == "__main__":
    sys.exit(main())
