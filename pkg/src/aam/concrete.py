"""Concrete machines: the CEK machine (pure core plus ``if``) and the
time-stamped CESK* machine for the full language.

The plain CESK* machine is the time-stamped one run with
:class:`CounterAllocator`.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, replace
from typing import Any, Callable

import immutables

from .domains import (
    Ar,
    Closure,
    EMPTY_ENV,
    Env,
    Final,
    Fn,
    IfK,
    KontValue,
    Mt,
    SetK,
    Stuck,
    Timeout,
    call_site,
    fv_of,
    is_runtime_value,
    sort_key,
)
from .reference import _subst
from .syntax import (
    App,
    Expr,
    If,
    Lam,
    LitCallcc,
    LitFalse,
    SetBang,
    Var,
    check_closed,
    is_pure,
    unparse,
)

__all__ = [
    "CekState",
    "inject_cek",
    "step_cek",
    "unload_cek",
    "Store",
    "CeskState",
    "CounterAllocator",
    "HistoryAllocator",
    "Stamp",
    "inject_ceskt",
    "step_ceskt",
    "unload_ceskt",
    "cesk_to_cek",
    "CycleError",
    "RunResult",
    "run_machine",
    "state_sexp",
    "HALT_LABEL",
]

# kont role of the initial (empty) continuation; program labels start at 1
HALT_LABEL = 0


# ======================================================================
# CEK


@dataclass(frozen=True)
class CekState:
    control: Any
    env: Env
    kont: Any


def inject_cek(e: Expr) -> CekState:
    check_closed(e)
    return CekState(e, EMPTY_ENV, Mt())


def step_cek(s: CekState):
    c, env, k = s.control, s.env, s.kont
    if isinstance(c, Var):
        clo = env.get(c.name)
        if clo is None:
            return Stuck(f"unbound variable {c.name}")
        return CekState(clo.value, clo.env, k)
    if isinstance(c, App):
        return CekState(
            c.operator,
            env.restrict(c.operator.fv),
            Ar(c.operand, env.restrict(c.operand.fv), k, c.label),
        )
    if isinstance(c, If):
        return CekState(
            c.test,
            env.restrict(c.test.fv),
            IfK(c.then, c.else_, env.restrict(c.then.fv | c.else_.fv), k),
        )
    if isinstance(c, (SetBang, LitCallcc)):
        raise ValueError("the CEK machine covers the pure core plus if")
    # c is a value
    if isinstance(k, Mt):
        return Final(c, env)
    if isinstance(k, Ar):
        return CekState(k.expr, k.env, Fn(c, env, k.next, k.site))
    if isinstance(k, Fn):
        f = k.value
        if not isinstance(f, Lam):
            return Stuck(f"cannot apply {unparse(f)}")
        body_env = k.env.bind(f.param, Closure(c, env)).restrict(f.body.fv)
        return CekState(f.body, body_env, k.next)
    if isinstance(k, IfK):
        branch = k.else_ if isinstance(c, LitFalse) else k.then
        return CekState(branch, k.env.restrict(branch.fv), k.next)
    raise TypeError(f"bad continuation {k!r}")


def unload_cek(v, env: Env) -> Expr:
    """The closed term a CEK closure stands for."""
    out = v
    for name, clo in env.items():
        if name in fv_of(out):
            out = _subst(unload_cek(clo.value, clo.env), name, out)
    return out


# ======================================================================
# time-stamped CESK*


class Store:
    """Concrete store with an allocation journal.

    ``journal`` records, for every live address, the role it was allocated
    for (``("bind", name)`` or ``("kont", label)``) and its birth time.
    ``touched`` lists the addresses written by the transition that produced
    this store and ``dropped`` the addresses a collection removed since
    then; neither takes part in equality.
    """

    __slots__ = ("cells", "journal", "touched", "dropped")

    def __init__(self, cells=None, journal=None, touched=(), dropped=()):
        self.cells = cells if cells is not None else immutables.Map()
        self.journal = journal if journal is not None else immutables.Map()
        self.touched = touched
        self.dropped = dropped

    def __getitem__(self, a):
        return self.cells[a]

    def __contains__(self, a) -> bool:
        return a in self.cells

    def __len__(self) -> int:
        return len(self.cells)

    def __iter__(self):
        return iter(self.cells)

    def storables(self, a):
        return (self.cells[a],)

    def items(self):
        return self.cells.items()

    def allocate(self, a, s, role, birth) -> "Store":
        if a in self.cells:
            raise AssertionError(f"allocator returned live address {a}")
        return Store(self.cells.set(a, s), self.journal.set(a, (role, birth)), (a,))

    def update(self, a, s) -> "Store":
        if a not in self.cells:
            raise KeyError(a)
        return Store(self.cells.set(a, s), self.journal, (a,))

    def restrict(self, live) -> "Store":
        if len(live) == len(self.cells) and all(a in live for a in self.cells):
            return self
        cells = self.cells.mutate()
        journal = self.journal.mutate()
        dropped = [a for a in self.cells.keys() if a not in live]
        for a in dropped:
            del cells[a]
            del journal[a]
        touched = None if self.touched is None else tuple(a for a in self.touched if a in live)
        return Store(cells.finish(), journal.finish(), touched, tuple(self.dropped) + tuple(dropped))

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Store)
            and self.cells == other.cells
            and self.journal == other.journal
        )

    def __hash__(self) -> int:
        return hash(self.cells)

    def __repr__(self) -> str:
        body = ", ".join(f"{a}: {s!r}" for a, s in sorted(self.cells.items()))
        return f"Store({{{body}}})"


@dataclass(frozen=True)
class CeskState:
    control: Any
    env: Env
    store: Store
    kaddr: Any
    time: Any


class CounterAllocator:
    """Integer times and addresses: ``tick`` adds one and ``alloc`` hands out
    the next time, which is never in the store."""

    name = "counter"

    def initial(self):
        return 0, 0  # (a0, t0)

    def tick(self, s: CeskState):
        return s.time + 1

    def alloc(self, s: CeskState):
        return s.time + 1


@dataclass(frozen=True)
class Stamp:
    """A time that also remembers the call sites entered so far, most recent
    first, as a cons chain ``(label, rest)``."""

    count: int
    calls: Any = field(default=None, compare=False, repr=False)

    def recent_calls(self, k: int) -> tuple:
        out = []
        c = self.calls
        while c is not None and len(out) < k:
            out.append(c[0])
            c = c[1]
        return tuple(out)

    def __str__(self) -> str:
        return str(self.count)


class HistoryAllocator(CounterAllocator):
    """Counter allocation whose times carry the call-string history; needed
    to abstract times under context-sensitive policies."""

    name = "history"

    def initial(self):
        return 0, Stamp(0, None)

    def tick(self, s: CeskState):
        site = call_site(s.control, s.store[s.kaddr])
        calls = s.time.calls if site is None else (site, s.time.calls)
        return Stamp(s.time.count + 1, calls)

    def alloc(self, s: CeskState):
        return s.time.count + 1


def inject_ceskt(e: Expr, allocator=None) -> CeskState:
    check_closed(e)
    allocator = allocator or CounterAllocator()
    a0, t0 = allocator.initial()
    store = Store().allocate(a0, Mt(), ("kont", HALT_LABEL), t0)
    store.touched = ()
    return CeskState(e, EMPTY_ENV, store, a0, t0)


def step_ceskt(s: CeskState, allocator=None):
    """One transition of the time-stamped CESK* machine.

    Returns the successor state, ``Final`` or ``Stuck``.
    """
    allocator = allocator or CounterAllocator()
    c, env, sigma, a = s.control, s.env, s.store, s.kaddr
    kappa = sigma[a]

    if isinstance(c, Var):
        if c.name not in env:
            return Stuck(f"unbound variable {c.name}")
        clo = sigma[env[c.name]]
        return CeskState(clo.value, clo.env, sigma, a, allocator.tick(s))

    if isinstance(c, App):
        b, u = allocator.alloc(s), allocator.tick(s)
        frame = Ar(c.operand, env.restrict(c.operand.fv), a, c.label)
        sigma2 = sigma.allocate(b, frame, ("kont", c.operator.label), u)
        return CeskState(c.operator, env.restrict(c.operator.fv), sigma2, b, u)

    if isinstance(c, If):
        b, u = allocator.alloc(s), allocator.tick(s)
        frame = IfK(c.then, c.else_, env.restrict(c.then.fv | c.else_.fv), a)
        sigma2 = sigma.allocate(b, frame, ("kont", c.test.label), u)
        return CeskState(c.test, env.restrict(c.test.fv), sigma2, b, u)

    if isinstance(c, SetBang):
        if c.target not in env:
            return Stuck(f"unbound variable {c.target}")
        b, u = allocator.alloc(s), allocator.tick(s)
        sigma2 = sigma.allocate(b, SetK(env[c.target], a), ("kont", c.rhs.label), u)
        return CeskState(c.rhs, env.restrict(c.rhs.fv), sigma2, b, u)

    if not is_runtime_value(c):
        raise TypeError(f"bad control {c!r}")

    if isinstance(kappa, Mt):
        return Final(c, env, sigma)

    if isinstance(kappa, Ar):
        b, u = allocator.alloc(s), allocator.tick(s)
        frame = Fn(c, env, kappa.next, kappa.site)
        sigma2 = sigma.allocate(b, frame, ("kont", kappa.expr.label), u)
        return CeskState(kappa.expr, kappa.env, sigma2, b, u)

    if isinstance(kappa, Fn):
        f = kappa.value
        if isinstance(f, Lam):
            b, u = allocator.alloc(s), allocator.tick(s)
            sigma2 = sigma.allocate(b, Closure(c, env), ("bind", f.param), u)
            body_env = kappa.env.bind(f.param, b).restrict(f.body.fv)
            return CeskState(f.body, body_env, sigma2, kappa.next, u)
        if isinstance(f, LitCallcc):
            if isinstance(c, Lam):
                # bind the formal to a fresh cell holding the captured continuation
                b, u = allocator.alloc(s), allocator.tick(s)
                kv = Closure(KontValue(kappa.next), EMPTY_ENV)
                sigma2 = sigma.allocate(b, kv, ("bind", c.param), u)
                body_env = env.bind(c.param, b).restrict(c.body.fv)
                return CeskState(c.body, body_env, sigma2, kappa.next, u)
            if isinstance(c, KontValue):
                # jump to c, handing it the continuation of the callcc application
                return CeskState(KontValue(kappa.next), EMPTY_ENV, sigma, c.addr, allocator.tick(s))
            return Stuck(f"callcc applied to {unparse(c)}")
        if isinstance(f, KontValue):
            return CeskState(c, env, sigma, f.addr, allocator.tick(s))
        return Stuck(f"cannot apply {unparse(f)}")

    if isinstance(kappa, IfK):
        branch = kappa.else_ if isinstance(c, LitFalse) else kappa.then
        return CeskState(branch, kappa.env.restrict(branch.fv), sigma, kappa.next, allocator.tick(s))

    if isinstance(kappa, SetK):
        old = sigma[kappa.target]
        sigma2 = sigma.update(kappa.target, Closure(c, env))
        return CeskState(old.value, old.env, sigma2, kappa.next, allocator.tick(s))

    raise TypeError(f"bad continuation {kappa!r}")


class CycleError(ValueError):
    pass


def unload_ceskt(v, env: Env, store: Store) -> Expr:
    """Like :func:`unload_cek`, dereferencing environment addresses."""

    def go(v, env, path):
        out = v
        for name, addr in env.items():
            if name not in fv_of(out):
                continue
            if addr in path:
                raise CycleError(f"address {addr} reached twice while unloading")
            clo = store[addr]
            out = _subst(go(clo.value, clo.env, path | {addr}), name, out)
        return out

    return go(v, env, frozenset())


def cesk_to_cek(s: CeskState) -> CekState:
    """Follow every address of a pure-core CESK* state to get the matching
    CEK state."""
    sigma = s.store

    def env_of(env: Env) -> Env:
        return Env((x, clo_of(sigma[a])) for x, a in env.items())

    def clo_of(clo: Closure) -> Closure:
        return Closure(clo.value, env_of(clo.env))

    def kont_of(a):
        frames = []
        while True:
            k = sigma[a]
            if isinstance(k, Mt):
                break
            frames.append(k)
            a = k.next
        out = Mt()
        for k in reversed(frames):
            if isinstance(k, Ar):
                out = Ar(k.expr, env_of(k.env), out, k.site)
            elif isinstance(k, Fn):
                out = Fn(k.value, env_of(k.env), out, k.site)
            elif isinstance(k, IfK):
                out = IfK(k.then, k.else_, env_of(k.env), out)
            else:
                raise ValueError(f"frame {k!r} has no CEK counterpart")
        return out

    return CekState(s.control, env_of(s.env), kont_of(s.kaddr))


def same_cek_state(a: CekState, b: CekState) -> bool:
    """Structural equality of CEK states that walks the continuation chain
    iteratively (deep stacks would overflow the recursive ``==``)."""
    if a.control != b.control or a.env != b.env:
        return False
    k1, k2 = a.kont, b.kont
    while True:
        if type(k1) is not type(k2):
            return False
        if isinstance(k1, Mt):
            return True
        if isinstance(k1, Ar):
            head1, head2 = (k1.expr, k1.env, k1.site), (k2.expr, k2.env, k2.site)
        elif isinstance(k1, Fn):
            head1, head2 = (k1.value, k1.env, k1.site), (k2.value, k2.env, k2.site)
        else:
            head1, head2 = (k1.then, k1.else_, k1.env), (k2.then, k2.else_, k2.env)
        if head1 != head2:
            return False
        k1, k2 = k1.next, k2.next


# ======================================================================
# driver


@dataclass
class RunResult:
    """``result`` is the unloaded value term, ``Timeout()`` or ``Stuck``.
    When the final closure cannot be unloaded (cyclic store after
    ``set!``), ``result`` is the raw ``Final``."""

    result: Any
    trace: list
    steps: int
    final: Final | None = None


def run_machine(
    e: Expr,
    machine: str = "cek",
    fuel: int = 100_000,
    allocator=None,
    gc: bool = False,
    keep_trace: bool = True,
) -> RunResult:
    """Iterate a machine from the injected state, recording every state.

    ``machine`` is ``"cek"`` or ``"cesk"``; ``gc`` selects the garbage-free
    CESK* machine (collect after every step).
    """
    if fuel < 1:
        raise ValueError("fuel must be positive")
    if machine == "cek":
        if gc:
            raise ValueError("garbage collection applies to the store machines only")
        if not is_pure(e):
            raise ValueError("the CEK machine covers the pure core plus if")
        state = inject_cek(e)
        step: Callable = step_cek
    elif machine == "cesk":
        allocator = allocator or CounterAllocator()
        state = inject_ceskt(e, allocator)
        if gc:
            from .gc import gc_step

            step = lambda st: gc_step(st, lambda x: step_ceskt(x, allocator))
        else:
            step = lambda st: step_ceskt(st, allocator)
    else:
        raise ValueError(f"unknown machine {machine!r}")

    trace = [state]
    steps = 0
    limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(limit, 20000))
    try:
        while True:
            nxt = step(state)
            if isinstance(nxt, Stuck):
                return RunResult(nxt, trace, steps)
            if isinstance(nxt, Final):
                try:
                    if machine == "cek":
                        term = unload_cek(nxt.value, nxt.env)
                    else:
                        term = unload_ceskt(nxt.value, nxt.env, nxt.store)
                except CycleError:
                    term = nxt
                return RunResult(term, trace, steps, nxt)
            if steps == fuel:
                return RunResult(Timeout(), trace, steps)
            state = nxt
            steps += 1
            if keep_trace:
                trace.append(state)
            else:
                trace[0] = state
    finally:
        sys.setrecursionlimit(limit)


# ======================================================================
# trace dump


def _sx(x) -> str:
    if isinstance(x, Env):
        return "(" + " ".join(f"({k} {_sx(v)})" for k, v in x.items()) + ")"
    if isinstance(x, Closure):
        return f"(clo {_sx(x.value)} {_sx(x.env)})"
    if isinstance(x, KontValue):
        return f"(kont {_sx(x.addr)})"
    if isinstance(x, Mt):
        return "(mt)"
    if isinstance(x, Ar):
        return f"(ar {_sx(x.expr)} {_sx(x.env)} {_sx(x.next)} {x.site})"
    if isinstance(x, Fn):
        return f"(fn {_sx(x.value)} {_sx(x.env)} {_sx(x.next)} {x.site})"
    if isinstance(x, IfK):
        return f"(if {_sx(x.then)} {_sx(x.else_)} {_sx(x.env)} {_sx(x.next)})"
    if isinstance(x, SetK):
        return f"(set {_sx(x.target)} {_sx(x.next)})"
    if isinstance(x, (Var, App, Lam, If, SetBang, LitFalse, LitCallcc)):
        return f"(@{x.label} {unparse(x)})"
    if isinstance(x, (Store,)):
        cells = sorted(x.items(), key=lambda kv: sort_key(kv[0]))
        return "(" + " ".join(f"({_sx(a)} {_sx(v)})" for a, v in cells) + ")"
    if hasattr(x, "items") and hasattr(x, "storables"):
        cells = sorted(x.items(), key=lambda kv: sort_key(kv[0]))
        return "(" + " ".join(
            f"({_sx(a)} " + " ".join(_sx(v) for v in sorted(vs, key=sort_key)) + ")"
            for a, vs in cells
        ) + ")"
    return str(x)


def state_sexp(s) -> str:
    """Canonical one-line rendering of a machine state."""
    if isinstance(s, CekState):
        return f"(cek {_sx(s.control)} {_sx(s.env)} {_sx(s.kont)})"
    return f"(cesk {_sx(s.control)} {_sx(s.env)} {_sx(s.store)} {_sx(s.kaddr)} {_sx(s.time)})"
