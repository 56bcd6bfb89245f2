import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from lccmech import expr as E
from lccmech.presets import OSCILLATOR_H

CHART1 = ("q1", "p1", "t")


def ev(text, point, consts=None, names=CHART1, cnames=("m0", "G")):
    return E.evaluate(E.parse(text, names, cnames), point, consts or {})


# -- parse -------------------------------------------------------------------

def test_parse_and_evaluate_simple():
    e = E.parse("p1^2/(2*m0)", CHART1, {"m0"})
    assert isinstance(e, E.BinOp) and e.op == "/"
    assert E.evaluate(e, {"p1": 2.0}, {"m0": 1.0}) == 2.0


def test_oscillator_hamiltonian_parses():
    e = E.parse(OSCILLATOR_H, CHART1, {"m0", "G"})
    assert e.free_variables == {"q1", "p1", "t"}


def test_syntax_error_offset():
    with pytest.raises(E.ExprSyntaxError) as info:
        E.parse("q1 +* p1", CHART1)
    assert info.value.offset == 4


@pytest.mark.parametrize("text", ["", "   ", "(q1", "q1)", "exp(", "sin()", "pow(q1)", "1..2", "q1 $ p1"])
def test_malformed(text):
    with pytest.raises(E.ExprSyntaxError):
        E.parse(text, CHART1)


def test_unknown_identifier_named():
    with pytest.raises(E.UnknownIdentifierError) as info:
        E.parse("q1 + mass", CHART1)
    assert info.value.name == "mass"


def test_precedence():
    # unary minus binds tighter than ^, which is right-associative
    assert ev("-q1^2", {"q1": 3.0}) == 9.0
    assert ev("2^3^2", {}) == 512.0
    assert ev("1 - 2 - 3", {}) == -4.0
    assert ev("8 / 4 / 2", {}) == 1.0
    assert ev("1 + 2*3^2", {}) == 19.0


# -- evaluate ----------------------------------------------------------------

def test_evaluate_examples():
    assert ev("sin(t)", {"t": 0.0}) == 0.0
    assert ev("exp(G*t)", {"t": 1.0}, {"G": 0.0}) == 1.0
    assert ev(OSCILLATOR_H, {"q1": 1.0, "p1": 2.0, "t": 0.0}, {"m0": 1.0, "G": 0.1}) == pytest.approx(2.5, abs=1e-15)


def test_functions():
    pt = {"q1": 0.7}
    assert ev("pow(q1, 3)", pt) == pytest.approx(0.343)
    assert ev("abs(-q1)", pt) == 0.7
    assert ev("tan(q1)", pt) == pytest.approx(math.tan(0.7))
    assert ev("sqrt(q1)", pt) == pytest.approx(math.sqrt(0.7))
    assert ev("sign(-q1)", pt) == -1.0


@pytest.mark.parametrize("text,point", [("log(q1)", {"q1": 0.0}), ("log(q1)", {"q1": -1.0}),
                                        ("sqrt(q1)", {"q1": -1.0}), ("1/q1", {"q1": 0.0})])
def test_domain_errors(text, point):
    with pytest.raises(E.DomainError):
        ev(text, point)


def test_domain_error_in_array():
    with pytest.raises(E.DomainError):
        ev("log(q1)", {"q1": np.array([1.0, -1.0])})


def test_unbound_variable():
    with pytest.raises(E.UnboundVariableError):
        ev("q1 + p1", {"q1": 1.0})
    with pytest.raises(E.UnboundVariableError):
        ev("m0*q1", {"q1": 1.0})


def test_array_broadcast():
    out = ev("q1*p1 + 1", {"q1": np.arange(3.0), "p1": 2.0})
    np.testing.assert_array_equal(out, [1.0, 3.0, 5.0])


# -- differentiate -----------------------------------------------------------

def test_derivative_examples():
    d = E.parse("q1^2", CHART1).diff("q1")
    assert E.evaluate(d, {"q1": 3.0}) == 6.0
    assert E.parse("q1", CHART1).diff("p1") == E.ZERO


def test_oscillator_time_derivative():
    H = E.parse(OSCILLATOR_H, CHART1, {"m0", "G"})
    c = {"m0": 1.0, "G": 1.0}
    assert E.evaluate(H.diff("t"), {"q1": 1.0, "p1": 2.0, "t": 0.0}, c) == pytest.approx(-1.5, abs=1e-12)
    h = 1e-6
    fd = (E.evaluate(H, {"q1": 1.0, "p1": 2.0, "t": h}, c) - E.evaluate(H, {"q1": 1.0, "p1": 2.0, "t": -h}, c)) / (2 * h)
    assert abs(fd + 1.5) < 1e-8


# -- substitute --------------------------------------------------------------

def test_substitute():
    e = E.parse("p1^2", CHART1)
    assert E.substitute(e, {"p1": E.var("t")}) == E.parse("t^2", CHART1)
    assert E.substitute(e, {}) == e


def test_substitute_hj_composite():
    H = E.parse(OSCILLATOR_H, CHART1, {"m0", "G"})
    S = E.parse("q1^2*cos(t)/2 + q1*t", ("q1", "t"))
    Sq = S.diff("q1")
    comp = E.substitute(H, {"p1": Sq})
    c = {"m0": 1.3, "G": 0.2}
    q, t = 0.4, 0.9
    p = E.evaluate(Sq, {"q1": q, "t": t})
    assert E.evaluate(comp, {"q1": q, "t": t}, c) == pytest.approx(E.evaluate(H, {"q1": q, "p1": p, "t": t}, c), rel=1e-14)


# -- properties --------------------------------------------------------------

LEAVES = st.sampled_from(["q1", "p1", "t", "2", "0.5", "G"])


@st.composite
def exprs(draw, depth=3):
    if depth == 0 or draw(st.booleans()):
        return draw(LEAVES)
    kind = draw(st.sampled_from(["+", "-", "*", "/", "^", "sin", "cos", "exp", "neg"]))
    a = draw(exprs(depth=depth - 1))
    if kind in ("sin", "cos", "exp"):
        return f"{kind}({a})"
    if kind == "neg":
        return f"-({a})"
    if kind == "^":
        return f"({a})^2"
    b = draw(exprs(depth=depth - 1))
    if kind == "/":
        return f"({a})/(2 + ({b})^2)"
    return f"({a}){kind}({b})"


POINT = {"q1": 0.3, "p1": -0.7, "t": 0.45}


@given(exprs())
def test_roundtrip_to_string(text):
    e = E.parse(text, CHART1, {"G"})
    assert E.parse(E.to_string(e), CHART1, {"G"}) == e


@given(exprs())
def test_evaluation_deterministic(text):
    e = E.parse(text, CHART1, {"G"})
    a = E.evaluate(e, POINT, {"G": 0.3})
    b = E.evaluate(E.parse(text, CHART1, {"G"}), dict(POINT), {"G": 0.3})
    assert a == b or (math.isnan(a) and math.isnan(b))


@given(exprs(), st.sampled_from(["q1", "p1", "t"]))
def test_derivative_matches_finite_difference(text, name):
    e = E.parse(text, CHART1, {"G"})
    c = {"G": 0.3}
    exact = E.evaluate(e.diff(name), POINT, c)
    h = 1e-6
    up, dn = dict(POINT), dict(POINT)
    up[name] += h
    dn[name] -= h
    fd = (E.evaluate(e, up, c) - E.evaluate(e, dn, c)) / (2 * h)
    assume(math.isfinite(exact) and abs(exact) < 1e4)
    assert abs(exact - fd) <= 1e-5 * max(1.0, abs(exact))


@given(exprs())
def test_compiled_matches_interpreter(text):
    e = E.parse(text, CHART1, {"G"})
    assert E.evaluate(e, POINT, {"G": 0.3}) == pytest.approx(E._interpret(e, POINT, {"G": 0.3}), rel=1e-15, nan_ok=True)
