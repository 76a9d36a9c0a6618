"""Substitution-based standard reduction for the pure core (plus ``if``).

Each step decomposes the term into an evaluation context and a redex
(operator before operand), contracts the redex, and plugs the result back.
"""

from __future__ import annotations

from .domains import Stuck, Timeout
from .syntax import App, Expr, If, Lam, LitCallcc, LitFalse, SetBang, Var, is_pure, is_value

__all__ = ["eval_reference", "reduce_once", "substitute"]


class _StuckRedex(Exception):
    pass


def substitute(value: Expr, name: str, e: Expr) -> Expr:
    """``[value/name]e``.  ``value`` must be closed, so no capture can occur."""
    if value.fv:
        raise AssertionError(f"substituting an open value: {value}")
    return _subst(value, name, e)


def _subst(v, x, e):
    if isinstance(e, Var):
        return v if e.name == x else e
    if isinstance(e, App):
        return App(_subst(v, x, e.operator), _subst(v, x, e.operand), e.label)
    if isinstance(e, Lam):
        if e.param == x or x not in e.fv:
            return e
        return Lam(e.param, _subst(v, x, e.body), e.label)
    if isinstance(e, If):
        if x not in e.fv:
            return e
        return If(_subst(v, x, e.test), _subst(v, x, e.then), _subst(v, x, e.else_), e.label)
    return e


def reduce_once(e: Expr) -> Expr | None:
    """One standard-reduction step, or None when ``e`` is already a value.

    Raises ``_StuckRedex`` when the next redex cannot be contracted.
    """
    if is_value(e):
        return None
    if isinstance(e, App):
        if not is_value(e.operator):
            return App(reduce_once(e.operator), e.operand, e.label)
        if not is_value(e.operand):
            return App(e.operator, reduce_once(e.operand), e.label)
        if isinstance(e.operator, Lam):
            return substitute(e.operand, e.operator.param, e.operator.body)
        raise _StuckRedex(f"cannot apply {e.operator}")
    if isinstance(e, If):
        if not is_value(e.test):
            return If(reduce_once(e.test), e.then, e.else_, e.label)
        return e.else_ if isinstance(e.test, LitFalse) else e.then
    if isinstance(e, Var):
        raise _StuckRedex(f"free variable {e.name}")
    if isinstance(e, (SetBang, LitCallcc)):
        raise ValueError("set! and callcc have no substitution semantics")
    raise TypeError(f"not an expression: {e!r}")


def eval_reference(e: Expr, fuel: int) -> Expr | Timeout | Stuck:
    """Evaluate a closed pure program by repeated standard reduction.

    Returns the value term, ``Timeout()`` once ``fuel`` contractions have
    been made without reaching a value, or ``Stuck`` when a non-function is
    applied.

    The loop keeps the evaluation context as a stack of frames, so after a
    contraction the search for the next redex resumes at the hole instead
    of the root.  Contexts have a unique decomposition, so this visits the
    same redexes in the same order as :func:`reduce_once` would.
    """
    if fuel < 1:
        raise ValueError("fuel must be positive")
    if not is_pure(e):
        raise ValueError("the reference evaluator covers the pure core plus if")
    context: list = []  # frames: ("arg", e), ("fn", v), ("if", then, else)
    term = e
    used = 0
    while True:
        while not is_value(term):
            if isinstance(term, App):
                context.append(("arg", term.operand))
                term = term.operator
            elif isinstance(term, If):
                context.append(("if", term.then, term.else_))
                term = term.test
            elif isinstance(term, Var):
                return Stuck(f"free variable {term.name}") if used < fuel else Timeout()
            else:
                raise TypeError(f"not an expression: {term!r}")
        if not context:
            return term
        frame = context.pop()
        if frame[0] == "arg":
            context.append(("fn", term))
            term = frame[1]
            continue
        if used == fuel:
            return Timeout()
        used += 1
        if frame[0] == "fn":
            f = frame[1]
            if not isinstance(f, Lam):
                return Stuck(f"cannot apply {f}")
            term = substitute(term, f.param, f.body)
        else:
            term = frame[2] if isinstance(term, LitFalse) else frame[1]
