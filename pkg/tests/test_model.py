import itertools
import math

import pytest
from hypothesis import given, settings, strategies as st

from ctmax.model import (
    And, Atom, Iff, Implies, ModelError, ModelSyntaxError, Not, Or, Parameter, SutModel,
    entails, evaluate, model_from_profile, model_stats, parse_model, render_model,
)

AUTONOMOUS_TEXT = """
[PARAMETERS]
L: dy, ni;
E: hw, ur, co;
M: cb, el;
S: ca, ra, li;
[CONSTRAINTS]
(L = ni && E = co) -> S != ca;
(E = hw || E = co) -> S != li;
M = el -> E = ur;
"""


def test_parse_autonomous(autonomous):
    m = parse_model(AUTONOMOUS_TEXT)
    assert [p.name for p in m.parameters] == ["L", "E", "M", "S"]
    assert len(m.constraints) == 3
    assert m == autonomous


def test_parameters_only():
    m = parse_model("[PARAMETERS]\na: x, y;\n")
    assert m.constraints == ()
    m = parse_model("[PARAMETERS]\na: x, y;\n[CONSTRAINTS]\n# nothing\n")
    assert m.constraints == ()


@pytest.mark.parametrize("text,fragment", [
    ("[PARAMETERS]\nL: dy, ni;\n[CONSTRAINTS]\nL = dz;\n", "unknown value"),
    ("[PARAMETERS]\nL: dy, ni;\n[CONSTRAINTS]\nQ = dy;\n", "unknown parameter"),
    ("[PARAMETERS]\nL: dy, ni;\nL: a;\n", "duplicate parameter"),
    ("[PARAMETERS]\nL: dy, dy;\n", "duplicate value"),
    ("[PARAMETERS]\n", "no parameters"),
])
def test_semantic_errors(text, fragment):
    with pytest.raises(ModelError, match=fragment):
        parse_model(text)


def test_syntax_error_position():
    with pytest.raises(ModelSyntaxError) as err:
        parse_model("[PARAMETERS]\nL: dy, ni;\n[CONSTRAINTS]\nL = dy &&;\n")
    assert err.value.line == 4 and err.value.col == 10
    with pytest.raises(ModelSyntaxError) as err:
        parse_model("[PARAMETERS]\nL: dy $ ni;\n")
    assert err.value.line == 2


def test_precedence():
    m = parse_model("[PARAMETERS]\na: 0,1;\nb: 0,1;\nc: 0,1;\n[CONSTRAINTS]\n"
                    "!a = 1 && b = 1 || c = 1;\na = 1 -> b = 1 -> c = 1;\na = 1 <-> b = 1 -> c = 0;\n")
    a, b, c = (Atom(i, 1) for i in range(3))
    assert m.constraints[0] == Or((And((Not(a), b)), c))
    assert m.constraints[1] == Implies(a, Implies(b, c))
    assert m.constraints[2] == Iff(a, Implies(b, Atom(2, 0)))


def test_quoted_labels_round_trip():
    m = parse_model('[PARAMETERS]\n"road type": "two lane", highway;\n[CONSTRAINTS]\n'
                    '"road type" != "two lane";\n')
    assert m.parameters[0].domain == ("two lane", "highway")
    assert parse_model(render_model(m)) == m


def test_entails_examples(autonomous):
    assert entails({"L": "dy", "E": "hw", "S": "ca", "M": "cb"}, autonomous)
    assert not entails({"L": "ni", "E": "co", "S": "ca", "M": "cb"}, autonomous)
    free = model_from_profile("2^3")
    assert all(entails(t, free) for t in itertools.product(range(2), repeat=3))


def test_make_test_validation(autonomous):
    with pytest.raises(ModelError):
        autonomous.make_test({"L": "dy"})
    with pytest.raises(ModelError):
        autonomous.make_test({"L": "zz", "E": "hw", "S": "ca", "M": "cb"})
    t = autonomous.make_test({"L": "ni", "E": "ur", "S": "li", "M": "el"})
    assert autonomous.labels(t) == {"L": "ni", "E": "ur", "M": "el", "S": "li"}


def test_model_stats(autonomous):
    assert model_stats(autonomous).full_assignment_count == 36
    assert model_stats(model_from_profile("5^1")).full_assignment_count == 5
    ins = model_from_profile("2^6 3^1 5^1 6^2 11^1 13^1 17^1 31^1")
    s = model_stats(ins)
    assert s.full_assignment_count == 2**6 * 3 * 5 * 6**2 * 11 * 13 * 17 * 31
    assert s.domain_profile == "2^6 3^1 5^1 6^2 11^1 13^1 17^1 31^1"


def test_invalid_atom_rejected():
    p = (Parameter("a", ("0", "1")),)
    with pytest.raises(ModelError):
        SutModel(p, (Atom(0, 2),))
    with pytest.raises(ModelError):
        SutModel(p, (Atom(1, 0),))
    with pytest.raises(ModelError):
        Parameter("b", ())


# random expressions over up to four binary parameters

def expr_strategy(n):
    atom = st.builds(Atom, st.integers(0, n - 1), st.integers(0, 1), st.booleans())
    return st.recursive(atom, lambda sub: st.one_of(
        st.builds(Not, sub),
        st.builds(lambda xs: And(tuple(xs)), st.lists(sub, min_size=2, max_size=3)),
        st.builds(lambda xs: Or(tuple(xs)), st.lists(sub, min_size=2, max_size=3)),
        st.builds(Implies, sub, sub),
        st.builds(Iff, sub, sub),
    ), max_leaves=8)


def reference(expr, test):
    if isinstance(expr, Atom):
        return (test[expr.param] == expr.value) == expr.equal
    if isinstance(expr, Not):
        return not reference(expr.arg, test)
    if isinstance(expr, And):
        return all(reference(a, test) for a in expr.args)
    if isinstance(expr, Or):
        return any(reference(a, test) for a in expr.args)
    if isinstance(expr, Implies):
        return (not reference(expr.lhs, test)) or reference(expr.rhs, test)
    return reference(expr.lhs, test) == reference(expr.rhs, test)


@settings(max_examples=150, deadline=None)
@given(st.integers(1, 4).flatmap(lambda n: st.tuples(st.just(n), st.lists(expr_strategy(n), max_size=3))))
def test_entails_truth_table_and_round_trip(case):
    n, exprs = case
    model = model_from_profile(f"2^{n}", exprs)
    for test in itertools.product(range(2), repeat=n):
        assert entails(test, model) == all(reference(e, test) for e in exprs)
        assert all(evaluate(e, test) == reference(e, test) for e in exprs)
    again = parse_model(render_model(model))
    assert [p.name for p in again.parameters] == [p.name for p in model.parameters]
    for test in itertools.product(range(2), repeat=n):
        assert entails(test, again) == entails(test, model)
