"""The finite, nondeterministic abstract time-stamped CESK* machine.

Stores map abstract addresses to sets of storables; writes join and reads
choose.  A :class:`Policy` fixes the abstract time and address spaces
(0CFA, k-CFA) together with the abstraction of concrete times and
addresses, so it owns both sides of the simulation condition.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Iterable

from .concrete import HALT_LABEL, CeskState, Stamp
from .domains import (
    Ar,
    Closure,
    EMPTY_ENV,
    Env,
    Fn,
    IfK,
    KontValue,
    Mt,
    SetK,
    call_site,
    is_runtime_value,
    sort_key,
)
from .syntax import App, Expr, If, Lam, LitCallcc, LitFalse, SetBang, Var, nodes

__all__ = [
    "BindAddr",
    "KontAddr",
    "AbstractStore",
    "AbstractState",
    "Policy",
    "KCFAPolicy",
    "policy_zero_cfa",
    "policy_k_cfa",
    "store_join",
    "abs_step",
    "abs_step_detailed",
    "alpha_state",
    "alpha_value",
    "alpha_storable",
    "leq_state",
    "inject_abstract",
    "is_final",
]


# ---------------------------------------------------------------- addresses


@dataclass(frozen=True)
class BindAddr:
    """Abstract address of a variable binding made in ``contour``."""

    name: str
    contour: tuple = ()

    def __str__(self) -> str:
        return f"{self.name}{_contour_str(self.contour)}"

    def _key(self):
        return (20, self.name, self.contour)


@dataclass(frozen=True)
class KontAddr:
    """Abstract address of a continuation frame pushed at ``label``."""

    label: int
    contour: tuple = ()

    def __str__(self) -> str:
        return f"k{self.label}{_contour_str(self.contour)}"

    def _key(self):
        return (21, self.label, self.contour)


def _contour_str(c: tuple) -> str:
    return "" if not c else "<" + ".".join(map(str, c)) + ">"


# ---------------------------------------------------------------- stores


class AbstractStore:
    """Immutable map from abstract addresses to non-empty frozensets."""

    __slots__ = ("_map", "_hash")

    def __init__(self, mapping: dict | None = None):
        self._map = dict(mapping or {})
        self._hash = None

    def __getitem__(self, a) -> frozenset:
        return self._map[a]

    def get(self, a, default=frozenset()):
        return self._map.get(a, default)

    def storables(self, a):
        return self._map[a]

    def __contains__(self, a) -> bool:
        return a in self._map

    def __iter__(self):
        return iter(self._map)

    def __len__(self) -> int:
        return len(self._map)

    def items(self):
        return self._map.items()

    def size(self) -> int:
        """Total number of (address, storable) pairs."""
        return sum(len(v) for v in self._map.values())

    def join(self, a, s) -> "AbstractStore":
        cur = self._map.get(a)
        if cur is not None and s in cur:
            return self
        m = dict(self._map)
        m[a] = (cur or frozenset()) | {s}
        return AbstractStore(m)

    def restrict(self, live) -> "AbstractStore":
        if all(a in live for a in self._map):
            return self
        return AbstractStore({a: v for a, v in self._map.items() if a in live})

    def leq(self, other: "AbstractStore") -> bool:
        for a, vs in self._map.items():
            ws = other._map.get(a)
            if ws is None or not vs <= ws:
                return False
        return True

    def __eq__(self, other) -> bool:
        return isinstance(other, AbstractStore) and (
            self is other or (hash(self) == hash(other) and self._map == other._map)
        )

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(frozenset(self._map.items()))
        return self._hash

    def __repr__(self) -> str:
        body = ", ".join(
            f"{a}: {{{', '.join(map(repr, sorted(v, key=sort_key)))}}}"
            for a, v in sorted(self._map.items(), key=lambda kv: sort_key(kv[0]))
        )
        return f"AbstractStore({{{body}}})"

    def _key(self):
        return (
            30,
            tuple(
                (sort_key(a), tuple(sorted(sort_key(s) for s in vs)))
                for a, vs in sorted(self._map.items(), key=lambda kv: sort_key(kv[0]))
            ),
        )


def store_join(store: AbstractStore, a, s) -> AbstractStore:
    """``store ⊔ [a ↦ {s}]``."""
    return store.join(a, s)


class AbstractState:
    """An abstract machine state; hashed once, compared structurally."""

    __slots__ = ("control", "env", "store", "kaddr", "time", "_hash")

    def __init__(self, control, env: Env, store: AbstractStore, kaddr, time):
        self.control = control
        self.env = env
        self.store = store
        self.kaddr = kaddr
        self.time = time
        self._hash = hash((control, env, store, kaddr, time))

    def replace(self, **kw) -> "AbstractState":
        d = dict(
            control=self.control, env=self.env, store=self.store, kaddr=self.kaddr, time=self.time
        )
        d.update(kw)
        return AbstractState(**d)

    def __hash__(self) -> int:
        return self._hash

    def __eq__(self, other) -> bool:
        if self is other:
            return True
        return (
            isinstance(other, AbstractState)
            and self._hash == other._hash
            and self.control == other.control
            and self.kaddr == other.kaddr
            and self.time == other.time
            and self.env == other.env
            and self.store == other.store
        )

    def __repr__(self) -> str:
        return (
            f"AbstractState({self.control}, {self.env!r}, {self.store!r}, "
            f"{self.kaddr}, {self.time})"
        )

    def _key(self):
        return (
            31,
            sort_key(self.control),
            self.env._key(),
            sort_key(self.kaddr),
            sort_key(self.time),
            self.store._key(),
        )


def is_final(s: AbstractState) -> bool:
    """A value in control with the empty continuation among the choices."""
    return is_runtime_value(s.control) and any(
        isinstance(k, Mt) for k in s.store.get(s.kaddr)
    )


# ---------------------------------------------------------------- policies


class Policy:
    """Abstract time/address carrier with the matching abstraction maps.

    Subclasses implement :meth:`tick`, :meth:`alloc`, :meth:`alpha_time`
    and :meth:`alpha_addr`.
    """

    name = "policy"
    k = 0

    def initial_time(self):
        raise NotImplementedError

    def tick(self, state: AbstractState, kont) -> Any:
        raise NotImplementedError

    def alloc(self, state: AbstractState, kont, role) -> Any:
        raise NotImplementedError

    def alpha_time(self, t) -> Any:
        raise NotImplementedError

    def alpha_addr(self, a, entry) -> Any:
        raise NotImplementedError

    def describe(self) -> dict:
        return {"name": self.name, "k": self.k}


class KCFAPolicy(Policy):
    """Call-string contours of length at most ``k``.

    Time is the ``k`` most recent call-site labels.  It advances only on
    transitions that bind a formal parameter; addresses are the allocation
    role (variable name or frame label) paired with the time being entered.
    """

    def __init__(self, program: Expr | None, k: int, name: str | None = None):
        if k < 0:
            raise ValueError("k must be non-negative")
        self.program = program
        self.k = k
        self.name = name or ("0cfa" if k == 0 else "kcfa")

    def initial_time(self):
        return ()

    def tick(self, state, kont):
        site = call_site(state.control, kont)
        if site is None or self.k == 0:
            return state.time
        return ((site,) + state.time)[: self.k]

    def alloc(self, state, kont, role):
        kind, tag = role
        contour = self.tick(state, kont)
        return BindAddr(tag, contour) if kind == "bind" else KontAddr(tag, contour)

    def alpha_time(self, t):
        if self.k == 0:
            return ()
        if not isinstance(t, Stamp):
            raise TypeError(
                "context-sensitive policies need HistoryAllocator times on the concrete side"
            )
        return t.recent_calls(self.k)

    def alpha_addr(self, a, entry):
        (kind, tag), birth = entry
        contour = self.alpha_time(birth)
        return BindAddr(tag, contour) if kind == "bind" else KontAddr(tag, contour)

    def address_space(self) -> tuple[int, int]:
        """(number of abstract addresses, number of abstract times)."""
        if self.program is None:
            raise ValueError("policy has no program attached")
        apps = sum(1 for n in nodes(self.program) if isinstance(n, App))
        names = {n.param for n in nodes(self.program) if isinstance(n, Lam)}
        sites = {HALT_LABEL}
        for n in nodes(self.program):
            if isinstance(n, App):
                sites |= {n.operator.label, n.operand.label}
            elif isinstance(n, If):
                sites.add(n.test.label)
            elif isinstance(n, SetBang):
                sites.add(n.rhs.label)
        times = sum(apps**i for i in range(self.k + 1))
        return (len(names) + len(sites)) * times, times


def policy_k_cfa(program: Expr | None, k: int) -> KCFAPolicy:
    return KCFAPolicy(program, k)


def policy_zero_cfa(program: Expr | None) -> KCFAPolicy:
    return KCFAPolicy(program, 0, name="0cfa")


# ---------------------------------------------------------------- injection


def inject_abstract(e: Expr, policy: Policy) -> AbstractState:
    a0 = policy.alpha_addr(None, (("kont", HALT_LABEL), _initial_concrete_time(policy)))
    return AbstractState(
        e, EMPTY_ENV, AbstractStore({a0: frozenset({Mt()})}), a0, policy.initial_time()
    )


def _initial_concrete_time(policy):
    return Stamp(0, None) if policy.k else 0


# ---------------------------------------------------------------- transitions


def abs_step_detailed(s: AbstractState, policy: Policy) -> tuple[list, int]:
    """All successors of ``s`` in canonical order, plus the number of stuck
    branches (choices for which no rule applies)."""
    c, env, sigma, a = s.control, s.env, s.store, s.kaddr
    if a not in sigma:
        raise KeyError(f"dangling continuation address {a}")
    out: list[AbstractState] = []
    stuck = 0
    konts = [k for k in sigma[a] if not isinstance(k, Closure)]
    konts.sort(key=sort_key)

    if isinstance(c, Var):
        if c.name not in env:
            return [], 1
        t2 = policy.tick(s, None)
        for clo in sorted(sigma.get(env[c.name]), key=sort_key):
            if isinstance(clo, Closure):
                out.append(AbstractState(clo.value, clo.env, sigma, a, t2))
        return _canon(out), int(not out)

    if isinstance(c, App):
        for k in konts:
            b = policy.alloc(s, k, ("kont", c.operator.label))
            frame = Ar(c.operand, env.restrict(c.operand.fv), a, c.label)
            out.append(
                AbstractState(
                    c.operator, env.restrict(c.operator.fv), sigma.join(b, frame), b, policy.tick(s, k)
                )
            )
        return _canon(out), stuck

    if isinstance(c, If):
        for k in konts:
            b = policy.alloc(s, k, ("kont", c.test.label))
            frame = IfK(c.then, c.else_, env.restrict(c.then.fv | c.else_.fv), a)
            out.append(
                AbstractState(c.test, env.restrict(c.test.fv), sigma.join(b, frame), b, policy.tick(s, k))
            )
        return _canon(out), stuck

    if isinstance(c, SetBang):
        if c.target not in env:
            return [], 1
        for k in konts:
            b = policy.alloc(s, k, ("kont", c.rhs.label))
            out.append(
                AbstractState(
                    c.rhs,
                    env.restrict(c.rhs.fv),
                    sigma.join(b, SetK(env[c.target], a)),
                    b,
                    policy.tick(s, k),
                )
            )
        return _canon(out), stuck

    if not is_runtime_value(c):
        raise TypeError(f"bad control {c!r}")

    for k in konts:
        u = policy.tick(s, k)
        if isinstance(k, Mt):
            continue  # final: no successor
        if isinstance(k, Ar):
            b = policy.alloc(s, k, ("kont", k.expr.label))
            out.append(
                AbstractState(k.expr, k.env, sigma.join(b, Fn(c, env, k.next, k.site)), b, u)
            )
        elif isinstance(k, Fn):
            f = k.value
            if isinstance(f, Lam):
                b = policy.alloc(s, k, ("bind", f.param))
                out.append(
                    AbstractState(
                        f.body,
                        k.env.bind(f.param, b).restrict(f.body.fv),
                        sigma.join(b, Closure(c, env)),
                        k.next,
                        u,
                    )
                )
            elif isinstance(f, LitCallcc):
                if isinstance(c, Lam):
                    b = policy.alloc(s, k, ("bind", c.param))
                    out.append(
                        AbstractState(
                            c.body,
                            env.bind(c.param, b).restrict(c.body.fv),
                            sigma.join(b, Closure(KontValue(k.next), EMPTY_ENV)),
                            k.next,
                            u,
                        )
                    )
                elif isinstance(c, KontValue):
                    out.append(AbstractState(KontValue(k.next), EMPTY_ENV, sigma, c.addr, u))
                else:
                    stuck += 1
            elif isinstance(f, KontValue):
                out.append(AbstractState(c, env, sigma, f.addr, u))
            else:
                stuck += 1
        elif isinstance(k, IfK):
            branch = k.else_ if isinstance(c, LitFalse) else k.then
            out.append(AbstractState(branch, k.env.restrict(branch.fv), sigma, k.next, u))
        elif isinstance(k, SetK):
            sigma2 = sigma.join(k.target, Closure(c, env))
            for old in sorted(sigma.get(k.target), key=sort_key):
                if isinstance(old, Closure):
                    out.append(AbstractState(old.value, old.env, sigma2, k.next, u))
        else:  # pragma: no cover
            raise TypeError(f"bad continuation {k!r}")
    return _canon(out), stuck


def _canon(states: list) -> list:
    uniq = list(dict.fromkeys(states))
    if len(uniq) > 1:
        uniq.sort(key=sort_key)
    return uniq


def abs_step(s: AbstractState, policy: Policy) -> list:
    """Every successor of ``s``, in canonical order."""
    return abs_step_detailed(s, policy)[0]


# ---------------------------------------------------------------- abstraction


def alpha_value(v, policy: Policy, journal):
    if isinstance(v, KontValue):
        return KontValue(policy.alpha_addr(v.addr, journal[v.addr]))
    return v


def _alpha_env(env: Env, policy, journal) -> Env:
    return Env((x, policy.alpha_addr(a, journal[a])) for x, a in env.items())


def alpha_storable(s, policy: Policy, journal):
    aa = lambda a: policy.alpha_addr(a, journal[a])
    if isinstance(s, Closure):
        return Closure(alpha_value(s.value, policy, journal), _alpha_env(s.env, policy, journal))
    if isinstance(s, Mt):
        return s
    if isinstance(s, Ar):
        return Ar(s.expr, _alpha_env(s.env, policy, journal), aa(s.next), s.site)
    if isinstance(s, Fn):
        return Fn(
            alpha_value(s.value, policy, journal),
            _alpha_env(s.env, policy, journal),
            aa(s.next),
            s.site,
        )
    if isinstance(s, IfK):
        return IfK(s.then, s.else_, _alpha_env(s.env, policy, journal), aa(s.next))
    if isinstance(s, SetK):
        return SetK(aa(s.target), aa(s.next))
    raise TypeError(f"not a storable: {s!r}")


def alpha_store(store, policy: Policy) -> AbstractStore:
    journal = store.journal
    acc: dict = {}
    for a, s in store.items():
        if a not in journal:
            raise KeyError(f"address {a} missing from the allocation journal")
        acc.setdefault(policy.alpha_addr(a, journal[a]), set()).add(
            alpha_storable(s, policy, journal)
        )
    return AbstractStore({a: frozenset(v) for a, v in acc.items()})


def alpha_state(s: CeskState, policy: Policy, store: AbstractStore | None = None) -> AbstractState:
    """Abstract a journaled concrete state.  ``store`` may supply a
    precomputed abstraction of ``s.store``."""
    journal = s.store.journal
    return AbstractState(
        alpha_value(s.control, policy, journal),
        _alpha_env(s.env, policy, journal),
        store if store is not None else alpha_store(s.store, policy),
        policy.alpha_addr(s.kaddr, journal[s.kaddr]),
        policy.alpha_time(s.time),
    )


def leq_state(s1: AbstractState, s2: AbstractState) -> bool:
    """Component-wise order: syntax, environments, addresses and times are
    flat; stores are ordered by pointwise set inclusion."""
    return (
        s1.control == s2.control
        and s1.env == s2.env
        and s1.kaddr == s2.kaddr
        and s1.time == s2.time
        and s1.store.leq(s2.store)
    )
