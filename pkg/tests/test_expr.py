import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nondiag.expr import (ExprSyntaxError, NonFiniteError, UnknownVariableError, eval_expr, evaluate,
                          parse_expr)


def test_parse_valid_product():
    e = parse_expr("u1*(1-u1-u2)", d=1, N=2)
    assert e.d == 1 and e.N == 2


def test_unknown_variable_out_of_range():
    with pytest.raises(UnknownVariableError):
        parse_expr("u3", d=1, N=2)
    with pytest.raises(UnknownVariableError):
        parse_expr("x2 + u1", d=1, N=2)


def test_trailing_operator_is_syntax_error():
    with pytest.raises(ExprSyntaxError) as info:
        parse_expr("sin(x1)+", d=1, N=2)
    assert info.value.pos >= len("sin(x1)")


@pytest.mark.parametrize("src", ["", "(u1", "u1)", "sin u1", "sin(u1, u2)", "2**3", "u1 ^ 0.5", "foo(u1)"])
def test_malformed_sources_rejected(src):
    with pytest.raises(ExprSyntaxError):
        parse_expr(src, d=1, N=2)


def test_eval_examples():
    assert eval_expr(parse_expr("u1*(1-u1-u2)", 1, 2), [0.0], [0.2, 0.3]) == pytest.approx(0.1, abs=1e-15)
    assert eval_expr(parse_expr("x1^2", 1, 2), [0.5], [0.0, 0.0]) == 0.25


def test_pole_is_reported():
    with pytest.raises(NonFiniteError):
        eval_expr(parse_expr("1/u1", 1, 2), [0.0], [0.0, 0.3])
    with pytest.raises(NonFiniteError):
        eval_expr(parse_expr("sqrt(u1 - 1)", 1, 2), [0.0], [0.0, 0.3])


def test_functions_constants_and_params():
    e = parse_expr("k*sin(pi*x1) + exp(0) + abs(-u2) + cos(0) - 2^-1", 1, 2)
    val = eval_expr(e, [0.5], [0.1, -0.25], {"k": 3.0})
    assert val == pytest.approx(3.0 + 1.0 + 0.25 + 1.0 - 0.5, abs=1e-14)


def test_precedence_and_unary_minus():
    e = parse_expr("-2^2 + 3*4/2 - (1-5)", 1, 1)
    assert eval_expr(e, [0.0], [0.0]) == -4 + 6 + 4


def test_vectorised_evaluation_matches_pointwise(rng):
    e = parse_expr("u1*u2 - x1*u1^3 + sqrt(abs(u2))", 1, 2)
    x = rng.uniform(0, 1, size=(50, 1))
    u = rng.uniform(0, 1, size=(50, 2))
    vec = evaluate(e, x, u)
    point = np.array([eval_expr(e, x[i], u[i]) for i in range(50)])
    assert np.array_equal(vec, point)


@settings(max_examples=50, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5))
def test_polynomial_identity_and_determinism(a, b):
    e = parse_expr("(u1 + u2)^2 - u1^2 - 2*u1*u2", 1, 2)
    v1 = eval_expr(e, [0.0], [a, b])
    v2 = eval_expr(e, [0.0], [a, b])
    assert v1 == v2
    assert v1 == pytest.approx(b * b, abs=1e-9 * (1 + a * a + b * b))
