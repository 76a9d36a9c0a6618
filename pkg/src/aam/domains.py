"""Runtime data shared by the concrete and abstract store machines.

Environments map identifiers to addresses; storables are closures or
continuation frames.  The same classes serve both machines: the concrete
machine uses integer addresses, the abstract one uses the tagged addresses
from :mod:`aam.abstract`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator

from .syntax import Lam, LitCallcc, _Node, is_value

__all__ = [
    "Env",
    "KontValue",
    "Closure",
    "Mt",
    "Ar",
    "Fn",
    "IfK",
    "SetK",
    "Frame",
    "Final",
    "Stuck",
    "Timeout",
    "sort_key",
    "is_runtime_value",
    "fv_of",
    "call_site",
]


def sort_key(x: Any):
    """Total structural order used to make enumeration deterministic."""
    if isinstance(x, bool):
        return (0, int(x))
    if isinstance(x, int):
        return (0, x)
    if isinstance(x, str):
        return (1, x)
    if isinstance(x, tuple):
        return (2, tuple(sort_key(i) for i in x))
    if isinstance(x, _Node):
        return (3, x.label, type(x).__name__)
    if x is None:
        return (-1,)
    return x._key()


class Env:
    """Immutable finite map from identifiers to addresses (or, for the CEK
    machine, to closures)."""

    __slots__ = ("_items", "_hash", "_map")

    def __init__(self, items: Iterable[tuple[str, Any]] = ()):
        m = dict(items)
        self._map = m
        self._items = tuple(sorted(m.items()))
        self._hash = hash(self._items)

    def __getitem__(self, name: str):
        return self._map[name]

    def get(self, name: str, default=None):
        return self._map.get(name, default)

    def __contains__(self, name: str) -> bool:
        return name in self._map

    def __iter__(self) -> Iterator[str]:
        return iter(k for k, _ in self._items)

    def __len__(self) -> int:
        return len(self._items)

    def items(self):
        return self._items

    def values(self):
        return [v for _, v in self._items]

    def bind(self, name: str, value) -> "Env":
        m = dict(self._map)
        m[name] = value
        return Env(m.items())

    def restrict(self, names) -> "Env":
        if all(k in names for k in self._map):
            return self
        return Env((k, v) for k, v in self._items if k in names)

    def map_values(self, f) -> "Env":
        return Env((k, f(v)) for k, v in self._items)

    def __eq__(self, other) -> bool:
        return isinstance(other, Env) and (
            self is other or (self._hash == other._hash and self._items == other._items)
        )

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        return "Env({" + ", ".join(f"{k}: {v!r}" for k, v in self._items) + "})"

    def _key(self):
        return (4, tuple((k, sort_key(v)) for k, v in self._items))


EMPTY_ENV = Env()


@dataclass(frozen=True)
class KontValue:
    """A reified continuation, represented by its store address."""

    addr: Any

    def __str__(self) -> str:
        return f"#<kont {self.addr}>"

    def _key(self):
        return (5, sort_key(self.addr))


def is_runtime_value(v) -> bool:
    return is_value(v) or isinstance(v, KontValue)


def fv_of(v) -> frozenset:
    return frozenset() if isinstance(v, KontValue) else v.fv


class _Cached:
    """Frozen dataclasses hashed once; storables live in many sets."""

    def __post_init__(self):
        object.__setattr__(self, "_h", hash(self._fields()))

    def __hash__(self) -> int:
        return self._h

    def __eq__(self, other) -> bool:
        if self is other:
            return True
        return (
            type(other) is type(self)
            and self._h == other._h
            and self._fields() == other._fields()
        )


@dataclass(frozen=True, eq=False)
class Closure(_Cached):
    """A value paired with the environment closing it (env is restricted to
    the value's free variables)."""

    value: Any
    env: Env

    def _fields(self):
        return (self.value, self.env)

    def _key(self):
        return (6, sort_key(self.value), self.env._key())


@dataclass(frozen=True, eq=False)
class Mt(_Cached):
    def _fields(self):
        return ()

    def _key(self):
        return (7,)


@dataclass(frozen=True, eq=False)
class Ar(_Cached):
    """Operand still to evaluate; ``site`` is the application's label."""

    expr: Any
    env: Env
    next: Any
    site: int

    def _fields(self):
        return (self.expr, self.env, self.next, self.site)

    def _key(self):
        return (8, sort_key(self.expr), self.env._key(), sort_key(self.next), self.site)


@dataclass(frozen=True, eq=False)
class Fn(_Cached):
    """Operator value waiting for its argument; ``site`` is the application's label."""

    value: Any
    env: Env
    next: Any
    site: int

    def _fields(self):
        return (self.value, self.env, self.next, self.site)

    def _key(self):
        return (9, sort_key(self.value), self.env._key(), sort_key(self.next), self.site)


@dataclass(frozen=True, eq=False)
class IfK(_Cached):
    then: Any
    else_: Any
    env: Env
    next: Any

    def _fields(self):
        return (self.then, self.else_, self.env, self.next)

    def _key(self):
        return (10, sort_key(self.then), sort_key(self.else_), self.env._key(), sort_key(self.next))


@dataclass(frozen=True, eq=False)
class SetK(_Cached):
    target: Any
    next: Any

    def _fields(self):
        return (self.target, self.next)

    def _key(self):
        return (11, sort_key(self.target), sort_key(self.next))


Frame = (Mt, Ar, Fn, IfK, SetK)


def call_site(control, frame) -> int | None:
    """Label of the application entered when ``control`` returns to ``frame``,
    or None when that transition binds no formal parameter."""
    if not is_runtime_value(control) or not isinstance(frame, Fn):
        return None
    if isinstance(frame.value, Lam):
        return frame.site
    if isinstance(frame.value, LitCallcc) and isinstance(control, Lam):
        return frame.site
    return None


# ---------------------------------------------------------------- outcomes


@dataclass(frozen=True)
class Final:
    """A halted machine: a value in control with the empty continuation."""

    value: Any
    env: Env
    store: Any = field(default=None, repr=False)

    def __str__(self) -> str:
        if isinstance(self.value, KontValue):
            return str(self.value)
        return f"#<closure {self.value}>"


@dataclass(frozen=True)
class Stuck:
    reason: str

    def __str__(self) -> str:
        return "stuck"


@dataclass(frozen=True)
class Timeout:
    def __str__(self) -> str:
        return "timeout"

