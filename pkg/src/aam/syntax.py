"""Labeled abstract syntax for the call-by-value lambda calculus with
``if``, ``set!``, ``#f`` and ``callcc``.

Programs are read from s-expression text.  Every node receives a positive
integer label in pre-order, starting at 1; labels double as allocation
sites for the abstract machine.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Union

__all__ = [
    "Var",
    "App",
    "Lam",
    "If",
    "SetBang",
    "LitFalse",
    "LitCallcc",
    "Expr",
    "ParseError",
    "ArityError",
    "UnboundVariableError",
    "parse",
    "parse_file",
    "unparse",
    "free_vars",
    "free_occurrences",
    "check_closed",
    "nodes",
    "relabel",
    "is_value",
    "alpha_equal",
    "is_pure",
]


class _Node:
    """Shared behaviour for syntax nodes.

    Nodes compare structurally (labels included).  The hash only looks at
    the node kind and label, which is cheap and consistent with equality.
    """

    label: int

    def __hash__(self) -> int:
        return hash((type(self).__name__, self.label))

    @cached_property
    def fv(self) -> frozenset:
        return frozenset(free_vars(self))

    def __str__(self) -> str:
        return unparse(self)


@dataclass(frozen=True, eq=True)
class Var(_Node):
    name: str
    label: int = 0

    __hash__ = _Node.__hash__


@dataclass(frozen=True, eq=True)
class App(_Node):
    operator: "Expr"
    operand: "Expr"
    label: int = 0

    __hash__ = _Node.__hash__


@dataclass(frozen=True, eq=True)
class Lam(_Node):
    param: str
    body: "Expr"
    label: int = 0

    __hash__ = _Node.__hash__


@dataclass(frozen=True, eq=True)
class If(_Node):
    test: "Expr"
    then: "Expr"
    else_: "Expr"
    label: int = 0

    __hash__ = _Node.__hash__


@dataclass(frozen=True, eq=True)
class SetBang(_Node):
    target: str
    rhs: "Expr"
    label: int = 0

    __hash__ = _Node.__hash__


@dataclass(frozen=True, eq=True)
class LitFalse(_Node):
    label: int = 0

    __hash__ = _Node.__hash__


@dataclass(frozen=True, eq=True)
class LitCallcc(_Node):
    label: int = 0

    __hash__ = _Node.__hash__


Expr = Union[Var, App, Lam, If, SetBang, LitFalse, LitCallcc]

VALUE_TYPES = (Lam, LitFalse, LitCallcc)


def is_value(e) -> bool:
    """Syntactic values: lambdas and the two literals."""
    return isinstance(e, VALUE_TYPES)


# ---------------------------------------------------------------- errors


class ParseError(ValueError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.message = message
        self.line = line
        self.col = col


class ArityError(ParseError):
    pass


class UnboundVariableError(ValueError):
    """Raised by :func:`check_closed`; ``occurrences`` lists (name, label)."""

    def __init__(self, occurrences: list[tuple[str, int]]):
        shown = ", ".join(f"{n}@{l}" for n, l in occurrences)
        super().__init__(f"unbound variable(s): {shown}")
        self.occurrences = occurrences


# ---------------------------------------------------------------- reader

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<comment>;[^\n]*)
  | (?P<open>\()
  | (?P<close>\))
  | (?P<atom>[^\s();]+)
    """,
    re.VERBOSE,
)
_IDENT = re.compile(r"[A-Za-z_\-!?][A-Za-z0-9_\-!?]*\Z")
_KEYWORDS = {"lambda", "λ", "if", "set!", "#f", "callcc"}


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


@dataclass
class _SList:
    items: list
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    line, col, pos = 1, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:  # pragma: no cover - the atom class is a catch-all
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        chunk = m.group()
        if kind not in ("ws", "comment"):
            toks.append(_Tok(kind, chunk, line, col))
        for ch in chunk:
            if ch == "\n":
                line, col = line + 1, 1
            else:
                col += 1
        pos = m.end()
    toks.append(_Tok("eof", "", line, col))
    return toks


def _read(toks: list[_Tok]):
    """Read a single datum; returns (datum, rest-index)."""

    def datum(i: int):
        t = toks[i]
        if t.kind == "open":
            items = []
            i += 1
            while toks[i].kind != "close":
                if toks[i].kind == "eof":
                    raise ParseError("unclosed parenthesis", t.line, t.col)
                d, i = datum(i)
                items.append(d)
            return _SList(items, t.line, t.col), i + 1
        if t.kind == "close":
            raise ParseError("unexpected ')'", t.line, t.col)
        if t.kind == "eof":
            raise ParseError("unexpected end of input", t.line, t.col)
        return t, i + 1

    d, i = datum(0)
    if toks[i].kind != "eof":
        t = toks[i]
        raise ParseError("trailing input after program", t.line, t.col)
    return d


def _ident(d, what: str) -> str:
    if isinstance(d, _SList):
        raise ParseError(f"expected {what}, found a list", d.line, d.col)
    if d.text in _KEYWORDS or not _IDENT.match(d.text):
        raise ParseError(f"invalid {what} {d.text!r}", d.line, d.col)
    return d.text


def _build(d):
    """Turn a datum into an unlabeled tree (labels are assigned afterwards)."""
    if isinstance(d, _Tok):
        if d.text == "#f":
            return LitFalse()
        if d.text == "callcc":
            return LitCallcc()
        return Var(_ident(d, "identifier"))
    items = d.items
    if not items:
        raise ParseError("empty application", d.line, d.col)
    head = items[0]
    kw = head.text if isinstance(head, _Tok) else None
    if kw in ("lambda", "λ"):
        if len(items) != 3:
            raise ArityError(f"{kw} expects a parameter list and one body", d.line, d.col)
        params = items[1]
        if not isinstance(params, _SList):
            raise ParseError("expected a parameter list", params.line, params.col)
        if len(params.items) != 1:
            raise ArityError(
                f"functions take exactly one parameter, got {len(params.items)}",
                params.line,
                params.col,
            )
        return Lam(_ident(params.items[0], "parameter"), _build(items[2]))
    if kw == "if":
        if len(items) != 4:
            raise ArityError("if expects test, then and else", d.line, d.col)
        return If(_build(items[1]), _build(items[2]), _build(items[3]))
    if kw == "set!":
        if len(items) != 3:
            raise ArityError("set! expects a variable and an expression", d.line, d.col)
        return SetBang(_ident(items[1], "variable"), _build(items[2]))
    if len(items) != 2:
        raise ArityError(
            f"application takes exactly one operand, got {len(items) - 1}", d.line, d.col
        )
    return App(_build(items[0]), _build(items[1]))


def relabel(e: Expr, start: int = 1) -> Expr:
    """Assign pre-order labels starting at ``start``."""
    counter = [start]

    def go(e):
        lab = counter[0]
        counter[0] += 1
        if isinstance(e, Var):
            return Var(e.name, lab)
        if isinstance(e, App):
            op = go(e.operator)
            return App(op, go(e.operand), lab)
        if isinstance(e, Lam):
            return Lam(e.param, go(e.body), lab)
        if isinstance(e, If):
            t = go(e.test)
            th = go(e.then)
            return If(t, th, go(e.else_), lab)
        if isinstance(e, SetBang):
            return SetBang(e.target, go(e.rhs), lab)
        if isinstance(e, LitFalse):
            return LitFalse(lab)
        if isinstance(e, LitCallcc):
            return LitCallcc(lab)
        raise TypeError(f"not an expression: {e!r}")

    return go(e)


def parse(text: str) -> Expr:
    """Parse one program and label it in pre-order from 1."""
    return relabel(_build(_read(_tokenize(text))))


def parse_file(path) -> Expr:
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read())


# ---------------------------------------------------------------- printing


def unparse(e) -> str:
    if isinstance(e, Var):
        return e.name
    if isinstance(e, App):
        return f"({unparse(e.operator)} {unparse(e.operand)})"
    if isinstance(e, Lam):
        return f"(λ ({e.param}) {unparse(e.body)})"
    if isinstance(e, If):
        return f"(if {unparse(e.test)} {unparse(e.then)} {unparse(e.else_)})"
    if isinstance(e, SetBang):
        return f"(set! {e.target} {unparse(e.rhs)})"
    if isinstance(e, LitFalse):
        return "#f"
    if isinstance(e, LitCallcc):
        return "callcc"
    # reified continuations and other runtime values print themselves
    return str(e)


# ---------------------------------------------------------------- queries


def nodes(e: Expr) -> Iterator[Expr]:
    """All nodes in pre-order."""
    stack = [e]
    while stack:
        n = stack.pop()
        yield n
        if isinstance(n, App):
            stack += [n.operand, n.operator]
        elif isinstance(n, Lam):
            stack.append(n.body)
        elif isinstance(n, If):
            stack += [n.else_, n.then, n.test]
        elif isinstance(n, SetBang):
            stack.append(n.rhs)


def free_occurrences(e: Expr) -> list[tuple[str, int]]:
    """Free variable occurrences as (name, label), in pre-order."""
    out: list[tuple[str, int]] = []

    def go(e, bound: frozenset):
        if isinstance(e, Var):
            if e.name not in bound:
                out.append((e.name, e.label))
        elif isinstance(e, App):
            go(e.operator, bound)
            go(e.operand, bound)
        elif isinstance(e, Lam):
            go(e.body, bound | {e.param})
        elif isinstance(e, If):
            go(e.test, bound)
            go(e.then, bound)
            go(e.else_, bound)
        elif isinstance(e, SetBang):
            if e.target not in bound:
                out.append((e.target, e.label))
            go(e.rhs, bound)

    go(e, frozenset())
    return out


def free_vars(e) -> set[str]:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, App):
        return e.operator.fv | e.operand.fv
    if isinstance(e, Lam):
        return e.body.fv - {e.param}
    if isinstance(e, If):
        return e.test.fv | e.then.fv | e.else_.fv
    if isinstance(e, SetBang):
        return {e.target} | e.rhs.fv
    if isinstance(e, (LitFalse, LitCallcc)):
        return set()
    # runtime values (continuation addresses) have no free variables
    return set()


def check_closed(e: Expr) -> None:
    occ = free_occurrences(e)
    if occ:
        raise UnboundVariableError(occ)


def is_pure(e: Expr, allow_if: bool = True) -> bool:
    """True when ``e`` uses neither ``set!`` nor ``callcc``."""
    for n in nodes(e):
        if isinstance(n, (SetBang, LitCallcc)):
            return False
        if isinstance(n, If) and not allow_if:
            return False
    return True


def alpha_equal(a, b) -> bool:
    """Equality up to bound-variable renaming; labels are ignored."""

    def go(a, b, env_a: dict, env_b: dict, depth: int) -> bool:
        if type(a) is not type(b):
            return False
        if isinstance(a, Var):
            ia, ib = env_a.get(a.name), env_b.get(b.name)
            if ia is None and ib is None:
                return a.name == b.name
            return ia == ib
        if isinstance(a, App):
            return go(a.operator, b.operator, env_a, env_b, depth) and go(
                a.operand, b.operand, env_a, env_b, depth
            )
        if isinstance(a, Lam):
            return go(
                a.body,
                b.body,
                {**env_a, a.param: depth},
                {**env_b, b.param: depth},
                depth + 1,
            )
        if isinstance(a, If):
            return (
                go(a.test, b.test, env_a, env_b, depth)
                and go(a.then, b.then, env_a, env_b, depth)
                and go(a.else_, b.else_, env_a, env_b, depth)
            )
        if isinstance(a, SetBang):
            ia, ib = env_a.get(a.target), env_b.get(b.target)
            same_target = (a.target == b.target) if ia is None and ib is None else ia == ib
            return same_target and go(a.rhs, b.rhs, env_a, env_b, depth)
        if isinstance(a, (LitFalse, LitCallcc)):
            return True
        return a == b

    return go(a, b, {}, {}, 0)
