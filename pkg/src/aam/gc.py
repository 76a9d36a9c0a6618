"""Reachability-based garbage collection for concrete and abstract stores.

The same code serves both machines: stores expose ``storables(a)``, which
is a one-element tuple for a concrete store and a set for an abstract one.
"""

from __future__ import annotations

import dataclasses
from typing import Callable, Iterable

from .domains import Ar, Closure, Env, Fn, IfK, KontValue, Mt, SetK, sort_key
from .syntax import _Node

__all__ = [
    "DanglingAddressError",
    "touched_by",
    "live_locs",
    "gc_fixpoint",
    "root_set",
    "collect",
    "gc_step",
]


class DanglingAddressError(KeyError):
    pass


def _env_range(env: Env, names) -> set:
    return {a for x, a in env.items() if x in names}


def _value_locs(v, env: Env) -> set:
    if isinstance(v, KontValue):
        return {v.addr}
    return _env_range(env, v.fv)


def touched_by(s) -> frozenset:
    """Addresses mentioned directly by one storable (no store lookups).

    Storables are immutable, so the answer is memoised on the object.
    """
    try:
        return s.__dict__["_refs"]
    except (KeyError, AttributeError):
        pass
    refs = frozenset(_touched_by(s))
    object.__setattr__(s, "_refs", refs)
    return refs


def _touched_by(s) -> set:
    if isinstance(s, Closure):
        return _value_locs(s.value, s.env)
    if isinstance(s, Mt):
        return set()
    if isinstance(s, Ar):
        return {s.next} | _env_range(s.env, s.expr.fv)
    if isinstance(s, Fn):
        return {s.next} | _value_locs(s.value, s.env)
    if isinstance(s, IfK):
        return {s.next} | _env_range(s.env, s.then.fv | s.else_.fv)
    if isinstance(s, SetK):
        return {s.target, s.next}
    raise TypeError(f"not a storable: {s!r}")


def _storables(store, a):
    try:
        return store.storables(a)
    except KeyError:
        raise DanglingAddressError(a) from None


def live_locs(store, item) -> set:
    """Locations that ``item`` may use, resolving continuation pointers
    through ``store``.

    ``item`` is an expression, a ``(value, env)`` pair, an environment, a
    storable, or an iterable of storables.  Frames pull in everything live
    from the frame they point to; the recursion is solved as a least fixed
    point, so cyclic abstract stores terminate.
    """
    out: set = set()
    pending: list = []

    def add(x):
        if isinstance(x, _Node):
            return
        if isinstance(x, tuple) and len(x) == 2 and isinstance(x[1], Env):
            out.update(_value_locs(x[0], x[1]))
            return
        if isinstance(x, Env):
            out.update(a for _, a in x.items())
            return
        if isinstance(x, (Closure, Mt, Ar, Fn, IfK, SetK)):
            out.update(touched_by(x))
            if isinstance(x, (Ar, Fn, IfK, SetK)):
                pending.append(x.next)
            return
        if isinstance(x, (set, frozenset, list, tuple)):
            for y in x:
                add(y)
            return
        raise TypeError(f"cannot compute live locations of {x!r}")

    add(item)
    seen: set = set()
    while pending:
        a = pending.pop()
        if a in seen:
            continue
        seen.add(a)
        for s in _storables(store, a):
            add(s)
    return out


def gc_fixpoint(
    grey: Iterable,
    black: Iterable,
    store,
    live: Callable | None = None,
    pick: Callable | None = None,
) -> set:
    """Run the grey/black collector until no grey location remains and
    return the black set.

    ``live(store, storables)`` gives the locations reached from one cell;
    it defaults to the direct references, which reaches the same fixed
    point as the full :func:`live_locs` with less repeated work.  ``pick``
    chooses the next grey location (any choice gives the same result).
    """
    grey = set(grey)
    black = set(black)
    while grey:
        a = pick(grey) if pick is not None else grey.pop()
        grey.discard(a)
        black.add(a)
        cells = _storables(store, a)
        if live is not None:
            grey |= live(store, cells) - black
            continue
        for s in cells:
            for b in touched_by(s):
                if b not in black:
                    grey.add(b)
    return black


def root_set(state) -> tuple[set, set]:
    """Initial (grey, black) sets for collecting ``state``."""
    store = state.store
    grey = _value_locs(state.control, state.env)
    for s in _storables(store, state.kaddr):
        grey |= touched_by(s)
    return grey, {state.kaddr}


def collect(state):
    """Restrict the store to the locations reachable from the state."""
    grey, black = root_set(state)
    live = gc_fixpoint(grey, black, state.store)
    store = state.store.restrict(live)
    if store is state.store:
        return state
    if dataclasses.is_dataclass(state):
        return dataclasses.replace(state, store=store)
    return state.replace(store=store)


def gc_step(state, stepper):
    """One step of the garbage-free machine: ``stepper`` then :func:`collect`
    on every resulting state."""
    result = stepper(state)
    if isinstance(result, list):
        out = list(dict.fromkeys(collect(s) for s in result))
        if len(out) > 1:
            out.sort(key=sort_key)
        return out
    if hasattr(result, "store") and hasattr(result, "kaddr"):
        return collect(result)
    return result
