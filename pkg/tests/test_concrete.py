import pytest
from hypothesis import given, settings

from aam.concrete import (
    CekState,
    CeskState,
    CounterAllocator,
    CycleError,
    HistoryAllocator,
    Store,
    cesk_to_cek,
    inject_cek,
    inject_ceskt,
    run_machine,
    state_sexp,
    step_cek,
    step_ceskt,
    unload_cek,
    unload_ceskt,
)
from aam.domains import EMPTY_ENV, Ar, Closure, Env, Final, Fn, KontValue, Mt, SetK, Stuck, Timeout
from aam.syntax import LitFalse, UnboundVariableError, alpha_equal, parse, unparse

from conftest import PURE, program, terms


ID_ID = "((λ (x) x) (λ (y) y))"


# ---------------------------------------------------------------- CEK


def test_inject_cek():
    e = parse("(λ (x) x)")
    assert inject_cek(e) == CekState(e, EMPTY_ENV, Mt())
    app = parse("((λ (x) x) #f)")
    assert inject_cek(app).control is app
    with pytest.raises(UnboundVariableError):
        inject_cek(parse("(λ (x) y)"))


def test_cek_push_operand_frame():
    e = parse(ID_ID)
    s = step_cek(inject_cek(e))
    assert s.control == e.operator
    assert s.kont == Ar(e.operand, EMPTY_ENV, Mt(), e.label)


def test_cek_variable_lookup():
    y = parse("(λ (y) y)")
    s = CekState(parse("x"), Env({"x": Closure(y, EMPTY_ENV)}), Mt())
    assert step_cek(s) == CekState(y, EMPTY_ENV, Mt())


def test_cek_apply_binds_formal():
    x, y = parse("(λ (x) x)"), parse("(λ (y) y)")
    s = CekState(y, EMPTY_ENV, Fn(x, EMPTY_ENV, Mt(), 1))
    assert step_cek(s) == CekState(x.body, Env({"x": Closure(y, EMPTY_ENV)}), Mt())


def test_cek_applying_false_is_stuck():
    assert isinstance(run_machine(parse("(#f #f)"), "cek", 10).result, Stuck)


def test_unload_cek():
    y = parse("(λ (y) y)")
    assert unload_cek(y, EMPTY_ENV) == y
    inner = parse("(λ (y) x)")
    z = parse("(λ (z) z)")
    out = unload_cek(inner, Env({"x": Closure(z, EMPTY_ENV)}))
    assert alpha_equal(out, parse("(λ (y) (λ (z) z))"))
    assert unload_cek(LitFalse(), EMPTY_ENV) == LitFalse()


def test_run_cek_id_id():
    r = run_machine(parse(ID_ID), "cek", 100)
    assert r.steps == 4
    assert unparse(r.result) == "(λ (y) y)"


def test_omega_trace_length():
    r = run_machine(program("omega"), "cek", 1000)
    assert r.result == Timeout()
    assert len(r.trace) == 1001


def test_cek_refuses_effects():
    with pytest.raises(ValueError):
        run_machine(program("set-returns-old"), "cek", 10)
    with pytest.raises(ValueError):
        run_machine(parse(ID_ID), "cek", 10, gc=True)


# ---------------------------------------------------------------- CESK*


def test_inject_ceskt():
    e = parse("(λ (x) x)")
    s = inject_ceskt(e)
    assert set(s.store) == {0}
    assert s.kaddr == 0 and s.time == 0
    assert s.store[0] == Mt()
    assert s.store.journal[0] == (("kont", 0), 0)
    assert s.control is e


def test_ceskt_push_rule():
    e = parse(ID_ID)
    s0 = inject_ceskt(e)
    s1 = step_ceskt(s0)
    assert s1.control == e.operator
    assert s1.kaddr == 1 and s1.time == 1
    assert s1.store[1] == Ar(e.operand, EMPTY_ENV, 0, e.label)
    assert 0 in s1.store


def test_run_cesk_id_id():
    r = run_machine(parse(ID_ID), "cesk", 100)
    assert r.steps == 4
    assert unparse(r.result) == "(λ (y) y)"


def test_set_returns_old_value_and_updates():
    e = parse("((λ (x) (set! x #f)) (λ (y) y))")
    trace = run_machine(e, "cesk", 100).trace
    # the state whose control is the set! expression
    at_set = next(s for s in trace if unparse(s.control) == "(set! x #f)")
    addr = at_set.env["x"]
    assert unparse(at_set.store[addr].value) == "(λ (y) y)"
    s = at_set
    while not isinstance(s.store[s.kaddr], SetK) or not isinstance(s.control, LitFalse):
        s = step_ceskt(s)
    after = step_ceskt(s)
    assert unparse(after.control) == "(λ (y) y)"
    assert after.store[addr] == Closure(s.control, EMPTY_ENV)
    assert isinstance(after.store[addr].value, LitFalse)
    untouched = set(s.store) - {addr}
    assert all(after.store[a] == s.store[a] for a in untouched)


def test_callcc_escape():
    r = run_machine(program("callcc-escape"), "cesk", 100)
    assert unparse(r.result) == "(λ (y) y)"


def test_callcc_unused():
    r = run_machine(program("callcc-unused"), "cesk", 100)
    assert unparse(r.result) == "(λ (y) y)"


def test_callcc_on_continuation():
    # (callcc k) hands k the continuation of the inner callcc, which is the
    # same as k; the outer binding v receives that continuation and applies it.
    r = run_machine(program("callcc-on-kont"), "cesk", 100)
    assert unparse(r.result) == "(λ (z) z)"


def test_callcc_reentry_runs_twice():
    r = run_machine(program("callcc-reenter-once"), "cesk", 1000)
    assert unparse(r.result) == "#f"


def test_callcc_applied_to_false_is_stuck():
    assert isinstance(run_machine(program("callcc-stuck"), "cesk", 10).result, Stuck)


def test_unload_ceskt():
    z = parse("(λ (z) z)")
    st = Store().allocate(7, Closure(z, EMPTY_ENV), ("bind", "x"), 1)
    assert unload_ceskt(LitFalse(), EMPTY_ENV, st) == LitFalse()
    out = unload_ceskt(parse("(λ (y) x)"), Env({"x": 7}), st)
    assert alpha_equal(out, parse("(λ (y) (λ (z) z))"))


def test_unload_cycle():
    f = parse("(λ (n) (f n))")
    st = Store().allocate(3, Closure(f, Env({"f": 3})), ("bind", "f"), 1)
    with pytest.raises(CycleError):
        unload_ceskt(f, Env({"f": 3}), st)
    r = run_machine(program("set-self-ref"), "cesk", 100)
    assert isinstance(r.result, Final)
    assert str(r.result) == "#<closure (λ (n) (f n))>"


def test_store_allocate_refuses_live_address():
    st = Store().allocate(0, Mt(), ("kont", 0), 0)
    with pytest.raises(AssertionError):
        st.allocate(0, Mt(), ("kont", 0), 1)


def test_restrict_drops_journal_entries():
    st = Store().allocate(0, Mt(), ("kont", 0), 0).allocate(1, Mt(), ("kont", 2), 1)
    small = st.restrict({0})
    assert set(small) == {0} and set(small.journal) == {0}
    assert st.restrict({0, 1}) is st


@pytest.mark.parametrize("path", PURE, ids=lambda p: p.stem)
def test_allocator_contract(path):
    e = program(path.stem)
    for alloc in (CounterAllocator(), HistoryAllocator()):
        s = inject_ceskt(e, alloc)
        for _ in range(300):
            nxt = step_ceskt(s, alloc)
            if not isinstance(nxt, CeskState):
                break
            assert alloc.alloc(s) not in s.store
            t0 = s.time.count if hasattr(s.time, "count") else s.time
            t1 = nxt.time.count if hasattr(nxt.time, "count") else nxt.time
            assert t1 > t0
            s = nxt


def test_history_times_record_call_sites():
    e = program("two-call-site-id")
    alloc = HistoryAllocator()
    r = run_machine(e, "cesk", 100, allocator=alloc)
    sites = [s.time.recent_calls(1) for s in r.trace]
    assert sites[0] == ()
    assert any(sites)


@settings(max_examples=150, deadline=None)
@given(terms())
def test_cesk_state_maps_to_cek_state(e):
    a = run_machine(e, "cek", 60)
    b = run_machine(e, "cesk", 60)
    assert len(a.trace) == len(b.trace)
    for x, y in zip(a.trace, b.trace):
        assert cesk_to_cek(y) == x


@settings(max_examples=100, deadline=None)
@given(terms())
def test_step_is_deterministic(e):
    s = inject_ceskt(e)
    for _ in range(40):
        n1, n2 = step_ceskt(s), step_ceskt(s)
        assert n1 == n2
        if not isinstance(n1, CeskState):
            break
        s = n1


def test_trace_dump_is_stable():
    e = parse(ID_ID)
    first = [state_sexp(s) for s in run_machine(e, "cesk", 10).trace]
    second = [state_sexp(s) for s in run_machine(parse(ID_ID), "cesk", 10).trace]
    assert first == second
    assert first[0] == "(cesk (@1 ((λ (x) x) (λ (y) y))) () ((0 (mt))) 0 0)"


def test_continuation_value_prints():
    assert str(KontValue(4)) == "#<kont 4>"
