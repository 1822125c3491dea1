import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from contactum.exprparse import (
    Binary,
    Const,
    DomainError,
    ExprSyntaxError,
    Unary,
    UnboundVariableError,
    Var,
    as_expr,
    evaluate,
    free_variables,
    parse,
    serialize,
    substitute,
)

FE = "cos(x/2)/2*(pi^2 - z^2) + f*sin(x/2)*pi*z"


def test_precedence():
    assert evaluate(parse("2+3*4"), {}) == 14.0


def test_free_variables_of_text():
    assert free_variables(parse("cos(x/2)*(p^2 - z^2)/2")) == {"x", "p", "z"}
    assert free_variables(parse("2+3")) == frozenset()
    assert free_variables(parse("p*q + z")) == {"p", "q", "z"}
    assert free_variables(parse("f*sin(x/2)")) == {"f", "x"}


def test_syntax_error_offset():
    with pytest.raises(ExprSyntaxError) as info:
        parse("sin(q@")
    assert info.value.offset == 6


@pytest.mark.parametrize("src", ["", "1+", "2 3", "x**2", "(x", "x)", "sin x", ",", "3.4.5"])
def test_malformed(src):
    with pytest.raises(ExprSyntaxError):
        parse(src)


def test_unknown_function():
    with pytest.raises(ExprSyntaxError, match="unknown function"):
        parse("foo(x)")


def test_power_binds_tighter_than_unary_minus():
    assert evaluate(parse("-2^2"), {}) == -4.0
    assert evaluate(parse("2^-1"), {}) == 0.5


def test_power_right_associative():
    assert evaluate(parse("2^3^2"), {}) == 512.0


def test_left_associative():
    assert evaluate(parse("8-3-2"), {}) == 3.0
    assert evaluate(parse("8/4/2"), {}) == 1.0


def test_pi_is_a_variable():
    e = parse("pi")
    assert e == Var("pi")
    with pytest.raises(UnboundVariableError) as info:
        evaluate(e, {})
    assert info.value.name == "pi"


def test_fe_hamiltonian_value():
    assert evaluate(parse(FE), {"x": math.pi, "pi": 1.0, "z": 0.0, "f": 1.0}) == pytest.approx(0.0, abs=1e-16)


def test_identity():
    assert evaluate(parse("z"), {"z": 5.0}) == 5.0


@pytest.mark.parametrize(
    "src, env",
    [
        ("1/q", {"q": 0.0}),
        ("ln(q)", {"q": 0.0}),
        ("ln(q)", {"q": -1.0}),
        ("sqrt(q)", {"q": -1.0}),
        ("q^0.5", {"q": -2.0}),
        ("q^-1", {"q": 0.0}),
        ("exp(q)", {"q": 1000.0}),
    ],
)
def test_domain_errors(src, env):
    with pytest.raises(DomainError):
        evaluate(parse(src), env)


def test_negative_base_integer_power():
    assert evaluate(parse("q^3"), {"q": -2.0}) == -8.0
    assert evaluate(parse("q^2"), {"q": -2.0}) == 4.0


def test_functions():
    env = {"x": 0.7}
    for name, fn in [("sin", math.sin), ("cos", math.cos), ("exp", math.exp), ("ln", math.log), ("sqrt", math.sqrt), ("abs", abs)]:
        assert evaluate(parse(f"{name}(x)"), env) == fn(0.7)


def test_serialize_is_fully_parenthesized():
    assert serialize(parse("a+b*c")) == "(a + (b * c))"
    assert serialize(parse("-x")) == "(-x)"
    assert serialize(parse("sin(x)^2")) == "(sin(x) ^ 2.0)"


def test_substitute():
    e = substitute(parse("x*y + x"), {"x": parse("2*t")})
    assert free_variables(e) == {"t", "y"}
    assert evaluate(e, {"t": 1.5, "y": 2.0}) == 9.0


def test_as_expr():
    assert as_expr(2) == Const(2.0)
    assert as_expr("q") == Var("q")
    e = parse("q+1")
    assert as_expr(e) is e
    with pytest.raises(TypeError):
        as_expr(object())


# ---------------------------------------------------------------------------
# properties

NAMES = ["x", "y", "z", "pi", "q1"]

leaves = st.one_of(
    st.builds(Const, st.floats(min_value=0.0, max_value=1e6, allow_nan=False, allow_infinity=False)),
    st.builds(Var, st.sampled_from(NAMES)),
)


def _extend(children):
    return st.one_of(
        st.builds(Unary, st.sampled_from(["neg", "sin", "cos", "exp", "ln", "sqrt", "abs"]), children),
        st.builds(Binary, st.sampled_from(["+", "-", "*", "/", "^"]), children, children),
    )


trees = st.recursive(leaves, _extend, max_leaves=12)


@settings(max_examples=300, deadline=None)
@given(trees)
def test_round_trip(tree):
    text = serialize(tree)
    once = parse(text)
    assert parse(serialize(once)) == once
    assert serialize(once) == text


@settings(max_examples=200, deadline=None)
@given(trees)
def test_free_variables_cover_every_var(tree):
    seen = set()

    def walk(e):
        if isinstance(e, Var):
            seen.add(e.name)
        elif isinstance(e, Unary):
            walk(e.arg)
        elif isinstance(e, Binary):
            walk(e.left)
            walk(e.right)

    walk(tree)
    assert free_variables(tree) == seen


def _safe(tree, env):
    try:
        return evaluate(tree, env)
    except (DomainError, OverflowError):
        return None


envs = st.fixed_dictionaries({n: st.floats(min_value=-3.0, max_value=3.0, allow_nan=False) for n in NAMES})


@settings(max_examples=300, deadline=None)
@given(trees, trees, envs)
def test_addition_homomorphism(a, b, env):
    va, vb = _safe(a, env), _safe(b, env)
    if va is None or vb is None or not math.isfinite(va + vb):
        return
    assert evaluate(Binary("+", a, b), env) == va + vb


@settings(max_examples=100, deadline=None)
@given(trees, envs)
def test_evaluate_is_deterministic(tree, env):
    # non-finite results raise, so plain equality is bit-exact here
    assert _safe(tree, env) == _safe(tree, env)
