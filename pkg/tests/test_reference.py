import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aam.domains import Stuck, Timeout
from aam.reference import eval_reference, substitute
from aam.syntax import Lam, Var, alpha_equal, parse

from conftest import terms


def test_identity_applied():
    # The operand keeps the labels it had in the program.
    assert eval_reference(parse("((λ (x) x) (λ (y) y))"), 10) == Lam("y", Var("y", 5), 4)


def test_omega_times_out():
    assert eval_reference(parse("((λ (x) (x x)) (λ (x) (x x)))"), 100) == Timeout()


def test_if_false_takes_else_branch():
    result = eval_reference(parse("(if #f (λ (a) a) (λ (b) b))"), 10)
    assert alpha_equal(result, parse("(λ (b) b)"))
    assert result.param == "b"


def test_any_non_false_value_is_true():
    result = eval_reference(parse("(if (λ (q) q) (λ (a) a) (λ (b) b))"), 10)
    assert result.param == "a"


def test_applying_false_is_stuck():
    assert isinstance(eval_reference(parse("(#f (λ (x) x))"), 10), Stuck)


def test_operator_reduced_before_operand():
    # The operand would diverge; a stuck operator must be found first.
    e = parse("((#f #f) ((λ (x) (x x)) (λ (x) (x x))))")
    assert isinstance(eval_reference(e, 50), Stuck)


def test_body_under_lambda_is_not_reduced():
    e = parse("(λ (z) ((λ (x) (x x)) (λ (x) (x x))))")
    assert eval_reference(e, 5) == e


def test_set_and_callcc_rejected():
    with pytest.raises(ValueError):
        eval_reference(parse("(callcc (λ (k) k))"), 10)
    with pytest.raises(ValueError):
        eval_reference(parse("((λ (x) (set! x #f)) #f)"), 10)


def test_substituting_open_value_is_an_error():
    with pytest.raises(AssertionError):
        substitute(parse("(λ (y) w)"), "x", parse("x"))


def test_substitution_respects_shadowing():
    e = parse("(λ (x) x)")
    assert substitute(parse("#f"), "x", e) == e


@settings(max_examples=150, deadline=None)
@given(terms())
def test_result_is_closed_value_or_outcome(e):
    r = eval_reference(e, 200)
    if not isinstance(r, (Stuck, Timeout)):
        assert not r.fv


def _by_single_steps(e, fuel):
    from aam.reference import _StuckRedex, reduce_once
    from aam.syntax import is_value

    for _ in range(fuel):
        try:
            nxt = reduce_once(e)
        except _StuckRedex as exc:
            return Stuck(str(exc))
        if nxt is None:
            return e
        e = nxt
    return e if is_value(e) else Timeout()


@settings(max_examples=500, deadline=None)
@given(terms(max_leaves=14), st.integers(1, 30))
def test_evaluator_matches_root_redecomposition(e, fuel):
    # The evaluator resumes at the hole; re-decomposing from the root after
    # every contraction must give the same outcome for every fuel.
    a, b = eval_reference(e, fuel), _by_single_steps(e, fuel)
    assert type(a) is type(b)
    if not isinstance(a, (Stuck, Timeout)):
        assert a == b
