"""Reachable-state exploration of the abstract machine, flow read-back, the
concrete/abstract soundness harness, and graph export."""

from __future__ import annotations

import hashlib
import json
import math
import os
import time
from collections import Counter, defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any

from .abstract import (
    AbstractState,
    AbstractStore,
    KCFAPolicy,
    Policy,
    abs_step_detailed,
    alpha_state,
    alpha_storable,
    is_final,
    leq_state,
)
from .concrete import (
    CounterAllocator,
    HistoryAllocator,
    _sx,
    inject_ceskt,
    step_ceskt,
)
from .domains import Ar, Closure, Final, KontValue, Stuck, is_runtime_value, sort_key
from .gc import collect
from .syntax import App, Expr, Lam, LitCallcc, LitFalse, Var, check_closed, nodes, unparse

__all__ = [
    "NodeCapExceeded",
    "StateGraph",
    "FlowFact",
    "SoundnessReport",
    "analyze",
    "flows_at",
    "value_summary",
    "soundness_check",
    "concrete_flows",
    "export_graph",
    "state_space_log2_bound",
    "DEFAULT_NODE_CAP",
    "GRAPH_SCHEMA",
]

DEFAULT_NODE_CAP = 1_000_000
GC_MODES = ("none", "free")


class NodeCapExceeded(RuntimeError):
    def __init__(self, cap: int, explored: int):
        super().__init__(f"state graph exceeded the node cap of {cap} ({explored} states)")
        self.cap = cap
        self.explored = explored


@dataclass
class StateGraph:
    program: Expr
    policy: Policy
    gc: str
    nodes: list  # AbstractState, index = node id
    edges: list  # sorted (src, dst) id pairs
    stuck: set = field(default_factory=set)
    finals: set = field(default_factory=set)
    stats: dict = field(default_factory=dict)

    @property
    def root(self) -> AbstractState:
        return self.nodes[0]

    def successors(self, i: int) -> list[int]:
        return [d for s, d in self.edges if s == i]


def _concrete_allocator(policy: Policy):
    return HistoryAllocator() if policy.k else CounterAllocator()


def initial_abstract_state(e: Expr, policy: Policy) -> AbstractState:
    return alpha_state(inject_ceskt(e, _concrete_allocator(policy)), policy)


def _expand(state: AbstractState, policy: Policy, gc: str):
    succ, stuck = abs_step_detailed(state, policy)
    if gc == "free":
        collected = list(dict.fromkeys(collect(s) for s in succ))
        if len(collected) > 1:
            collected.sort(key=sort_key)
        succ = collected
    return succ, stuck


def analyze(
    e: Expr,
    policy: Policy,
    gc: str = "free",
    node_cap: int | None = None,
    jobs: int = 1,
) -> StateGraph:
    """Explore every abstract state reachable from the abstracted initial
    state, breadth first, deduplicating by exact equality.

    Raises :class:`NodeCapExceeded` rather than returning a truncated graph.
    """
    if gc not in GC_MODES:
        raise ValueError(f"gc must be one of {GC_MODES}")
    check_closed(e)
    if node_cap is None:
        node_cap = int(os.environ.get("AAM_NODE_CAP", DEFAULT_NODE_CAP))
    started = time.perf_counter()

    root = initial_abstract_state(e, policy)
    if gc == "free":
        root = collect(root)
    index: dict[AbstractState, int] = {root: 0}
    order = [root]
    edges: set = set()
    stuck_ids: set = set()
    final_ids: set = set()
    live_sizes: Counter = Counter()
    steps = 0
    max_store = root.store.size()

    frontier = [0]
    pool = ThreadPoolExecutor(max_workers=jobs) if jobs > 1 else None
    try:
        while frontier:
            states = [order[i] for i in frontier]
            if pool is not None:
                results = list(pool.map(lambda s: _expand(s, policy, gc), states))
            else:
                results = [_expand(s, policy, gc) for s in states]
            nxt = []
            for i, (succ, stuck) in zip(frontier, results):
                steps += 1
                if stuck:
                    stuck_ids.add(i)
                if is_final(order[i]):
                    final_ids.add(i)
                for s in succ:
                    if gc == "free":
                        live_sizes[len(s.store)] += 1
                    j = index.get(s)
                    if j is None:
                        j = len(order)
                        if j >= node_cap:
                            raise NodeCapExceeded(node_cap, j)
                        index[s] = j
                        order.append(s)
                        nxt.append(j)
                        max_store = max(max_store, s.store.size())
                    edges.add((i, j))
            frontier = nxt
    finally:
        if pool is not None:
            pool.shutdown()

    stats = {
        "nodes": len(order),
        "edges": len(edges),
        "steps": steps,
        "max_store_size": max_store,
        "final_nodes": len(final_ids),
        "stuck_nodes": len(stuck_ids),
        "wall_time": time.perf_counter() - started,
    }
    if gc == "free":
        stats["live_set_sizes"] = {str(k): v for k, v in sorted(live_sizes.items())}
    return StateGraph(e, policy, gc, order, sorted(edges), stuck_ids, final_ids, stats)


# ---------------------------------------------------------------- flows


@dataclass(frozen=True)
class FlowFact:
    """Values that may reach ``site``; ``by_context`` splits them by the
    abstract address read (variables) or by time (applications)."""

    site: int
    values: frozenset
    by_context: dict = field(default_factory=dict, compare=False)


def value_summary(v) -> str:
    if isinstance(v, Lam):
        return f"lam@{v.label}"
    if isinstance(v, LitFalse):
        return "#f"
    if isinstance(v, LitCallcc):
        return "callcc"
    if isinstance(v, KontValue):
        return "kont"
    raise TypeError(f"not a value: {v!r}")


def _find_node(program: Expr, label: int):
    for n in nodes(program):
        if n.label == label:
            return n
    raise KeyError(f"no expression labeled {label}")


def flows_at(g: StateGraph, site: int) -> FlowFact:
    """For a variable reference: the values its binding may hold whenever it
    is evaluated.  For an application: the operator values that may be
    applied there."""
    target = _find_node(g.program, site)
    by_ctx: dict = defaultdict(set)
    if isinstance(target, Var):
        for s in g.nodes:
            if s.control is target or (isinstance(s.control, Var) and s.control == target):
                addr = s.env[target.name]
                for st in s.store.get(addr):
                    if isinstance(st, Closure):
                        by_ctx[addr].add(value_summary(st.value))
    elif isinstance(target, App):
        for s in g.nodes:
            if not is_runtime_value(s.control):
                continue
            for k in s.store.get(s.kaddr):
                if isinstance(k, Ar) and k.site == site:
                    by_ctx[s.time].add(value_summary(s.control))
    else:
        raise ValueError(f"label {site} is neither a variable reference nor an application")
    values = frozenset().union(*by_ctx.values()) if by_ctx else frozenset()
    return FlowFact(site, values, {k: frozenset(v) for k, v in by_ctx.items()})


def concrete_flows(e: Expr, fuel: int, gc: bool = False) -> dict[int, set]:
    """Values observed at each variable reference on one concrete run."""
    state = inject_ceskt(e)
    seen: dict[int, set] = defaultdict(set)
    for _ in range(fuel + 1):
        c = state.control
        if isinstance(c, Var) and c.name in state.env:
            seen[c.label].add(value_summary(state.store[state.env[c.name]].value))
        nxt = step_ceskt(state)
        if isinstance(nxt, (Final, Stuck)):
            break
        state = collect(nxt) if gc else nxt
    return dict(seen)


# ---------------------------------------------------------------- soundness


@dataclass
class SoundnessReport:
    ok: bool
    steps: int
    outcome: str
    step_violation: Any = None  # (concrete index, alpha(s), alpha(s'))
    coverage_violation: Any = None  # (concrete index, alpha(s))
    graph_nodes: int = 0

    def __str__(self) -> str:
        if self.ok:
            return f"sound: {self.steps} concrete steps, {self.graph_nodes} abstract states"
        if self.step_violation is not None:
            return f"step simulation fails after concrete step {self.step_violation[0]}"
        return f"concrete state {self.coverage_violation[0]} is not covered by the graph"


class _IncrementalAlpha:
    """Keeps the abstraction of a concrete store up to date from the cells
    written by each transition."""

    def __init__(self, policy: Policy):
        self.policy = policy
        self.counts: dict = {}
        self.frozen: dict = {}
        self.store = None

    def _add(self, store, a, s, delta):
        j = store.journal
        ah = self.policy.alpha_addr(a, j[a])
        sh = alpha_storable(s, self.policy, j)
        c = self.counts.setdefault(ah, Counter())
        c[sh] += delta
        if c[sh] <= 0:
            del c[sh]
        if c:
            self.frozen[ah] = frozenset(c)
        else:
            del self.counts[ah]
            self.frozen.pop(ah, None)

    def update(self, store) -> AbstractStore:
        prev = self.store
        if store is prev:
            return AbstractStore(self.frozen)
        if prev is None or store.touched is None:
            self.counts, self.frozen = {}, {}
            for a, s in store.items():
                self._add(store, a, s, 1)
        else:
            for a in store.dropped:
                if a in prev:
                    self._add(prev, a, prev[a], -1)
            for a in store.touched:
                if a in prev:
                    self._add(prev, a, prev[a], -1)
                self._add(store, a, store[a], 1)
        self.store = store
        return AbstractStore(self.frozen)


def soundness_check(
    e: Expr,
    policy: Policy,
    fuel: int = 10_000,
    gc: str = "none",
    graph: StateGraph | None = None,
    node_cap: int | None = None,
) -> SoundnessReport:
    """Check the abstract machine against a journaled concrete run.

    (a) every concrete transition s -> s' is matched: some abstract
    successor of alpha(s) dominates alpha(s');
    (b) every alpha(s) is below some node of ``analyze(e, policy, gc)``.

    The per-step check runs first, so a broken policy is reported without
    exploring its (possibly huge) state graph.
    """
    allocator = _concrete_allocator(policy)
    inc = _IncrementalAlpha(policy)
    state = inject_ceskt(e, allocator)
    if gc == "free":
        state = collect(state)
    hats = [alpha_state(state, policy, inc.update(state.store))]
    report = SoundnessReport(True, 0, "timeout")
    for i in range(fuel):
        nxt = step_ceskt(state, allocator)
        if isinstance(nxt, Final):
            report.outcome = "final"
            break
        if isinstance(nxt, Stuck):
            report.outcome = "stuck"
            break
        if gc == "free":
            nxt = collect(nxt)
        nxt_hat = alpha_state(nxt, policy, inc.update(nxt.store))
        succ, _ = _expand(hats[-1], policy, gc)
        if not any(leq_state(nxt_hat, x) for x in succ):
            report.ok, report.step_violation = False, (i, hats[-1], nxt_hat)
            report.steps = i
            return report
        state = nxt
        hats.append(nxt_hat)
        report.steps = i + 1

    if graph is None:
        graph = analyze(e, policy, gc=gc, node_cap=node_cap)
    report.graph_nodes = len(graph.nodes)
    buckets: dict = defaultdict(list)
    for n in graph.nodes:
        buckets[(n.control, n.env, n.kaddr, n.time)].append(n)
    for i, h in enumerate(hats):
        candidates = buckets.get((h.control, h.env, h.kaddr, h.time), ())
        if not any(leq_state(h, n) for n in candidates):
            report.ok, report.coverage_violation = False, (i, h)
            return report
    return report


# ---------------------------------------------------------------- export


def state_space_log2_bound(program: Expr, policy: KCFAPolicy) -> float:
    """log2 of a crude but finite bound on the number of abstract states for
    ``program`` under ``policy``."""
    n_addr, n_time = policy.address_space()
    n_expr = sum(1 for _ in nodes(program))
    n_vars = len({n.param for n in nodes(program) if isinstance(n, Lam)})
    lg = math.log2
    log_envs = n_vars * lg(n_addr + 1)
    log_values = lg(n_expr + n_addr)
    # closures, ar/fn/if frames, set frames, mt
    log_storables = lg(
        2 ** (log_values + log_envs)
        + 3 * 2 ** (2 * lg(n_expr) + log_envs + lg(n_addr))
        + 2 ** (2 * lg(n_addr))
        + 1
    )
    log_stores = n_addr * 2**log_storables  # every address holds any subset
    return log_values + log_envs + log_stores + lg(n_addr) + lg(n_time)


def _state_text(s: AbstractState) -> str:
    return f"(abs {_sx(s.control)} {_sx(s.env)} {_sx(s.store)} {_sx(s.kaddr)} {_sx(s.time)})"


def _stable_id(s: AbstractState) -> str:
    return "s" + hashlib.sha1(_state_text(s).encode("utf-8")).hexdigest()[:12]


def _caption(s: AbstractState) -> str:
    c = s.control
    text = unparse(c) if not isinstance(c, KontValue) else str(c)
    if len(text) > 40:
        text = text[:37] + "..."
    t = "." .join(map(str, s.time)) if isinstance(s.time, tuple) else str(s.time)
    return f"{text} | t=<{t}>"


GRAPH_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "aam state graph",
    "type": "object",
    "required": ["program", "policy", "gc", "nodes", "edges", "flows", "stats"],
    "additionalProperties": False,
    "properties": {
        "program": {"type": "string"},
        "policy": {
            "type": "object",
            "required": ["name", "k"],
            "properties": {
                "name": {"type": "string"},
                "k": {"type": "integer", "minimum": 0},
            },
        },
        "gc": {"enum": list(GC_MODES)},
        "nodes": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "control", "time"],
                "properties": {
                    "id": {"type": "integer", "minimum": 0},
                    "control": {"type": "string"},
                    "time": {"type": "array", "items": {"type": "integer"}},
                    "final": {"type": "boolean"},
                    "stuck": {"type": "boolean"},
                },
            },
        },
        "edges": {
            "type": "array",
            "items": {
                "type": "array",
                "items": {"type": "integer", "minimum": 0},
                "minItems": 2,
                "maxItems": 2,
            },
        },
        "flows": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["label", "values"],
                "properties": {
                    "label": {"type": "integer", "minimum": 1},
                    "values": {"type": "array", "items": {"type": "string"}},
                },
            },
        },
        "stats": {
            "type": "object",
            "required": ["nodes", "edges", "steps", "stuck_nodes", "final_nodes"],
            "properties": {
                "nodes": {"type": "integer"},
                "edges": {"type": "integer"},
                "steps": {"type": "integer"},
                "stuck_nodes": {"type": "integer"},
                "final_nodes": {"type": "integer"},
                "max_store_size": {"type": "integer"},
                "live_set_sizes": {
                    "type": "object",
                    "additionalProperties": {"type": "integer"},
                },
            },
        },
    },
}


def graph_document(g: StateGraph) -> dict:
    """The JSON-ready description of a graph (see ``GRAPH_SCHEMA``).
    Wall time is left out so that documents are reproducible."""
    flows = []
    for n in nodes(g.program):
        if isinstance(n, (Var, App)):
            fact = flows_at(g, n.label)
            flows.append({"label": n.label, "values": sorted(fact.values)})
    flows.sort(key=lambda f: f["label"])
    stats = {k: v for k, v in g.stats.items() if k != "wall_time"}
    return {
        "program": unparse(g.program),
        "policy": g.policy.describe(),
        "gc": g.gc,
        "nodes": [
            {
                "id": i,
                "control": unparse(s.control) if not isinstance(s.control, KontValue) else str(s.control),
                "time": list(s.time),
                "final": i in g.finals,
                "stuck": i in g.stuck,
            }
            for i, s in enumerate(g.nodes)
        ],
        "edges": [[a, b] for a, b in g.edges],
        "flows": flows,
        "stats": stats,
    }


def export_graph(g: StateGraph, format: str = "json") -> str:
    if format == "json":
        return json.dumps(graph_document(g), indent=2, ensure_ascii=False, sort_keys=True) + "\n"
    if format == "dot":
        ids = [_stable_id(s) for s in g.nodes]
        lines = ["digraph aam {", "  node [shape=box, fontname=monospace];"]
        for i, (sid, s) in enumerate(zip(ids, g.nodes)):
            attrs = [f'label="{_dot_escape(_caption(s))}"']
            if i in g.finals:
                attrs.append("peripheries=2")
            if i in g.stuck:
                attrs.append("color=red")
            lines.append(f"  {sid} [{', '.join(attrs)}];")
        for a, b in g.edges:
            lines.append(f"  {ids[a]} -> {ids[b]};")
        lines.append("}")
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown format {format!r}")


def _dot_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')
