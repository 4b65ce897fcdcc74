"""
Expression language: parsing, evaluation, errors with byte offsets and
unparse/parse agreement.
"""
import math

import numpy as np
import pytest

from numerics.expr import (
    Constant,
    ExprArityError,
    ExprDomainError,
    ExprSyntaxError,
    ExprUnknownIdentifier,
    as_function,
    diff_numeric,
    evaluate,
    free_variables,
    may_be_negative,
    parse_expression,
    spow,
    unparse,
)


def value(src: str, **bindings) -> float:
    return evaluate(parse_expression(src), bindings)


def test_precedence_and_associativity():
    assert value("1+2*3") == 7.0
    assert value("2^3^2") == 512.0
    assert value("-2^2") == -4.0
    assert value("(1+2)*3") == 9.0
    assert value("8/4/2") == 1.0
    assert value("t-1-1", t=5.0) == 3.0


def test_functions_and_named_constant():
    assert value("sin(pi/2)") == pytest.approx(1.0)
    assert value("ln(exp(2))") == pytest.approx(2.0)
    assert value("sqrt(abs(-9))") == pytest.approx(3.0)
    assert isinstance(parse_expression("pi"), Constant)


def test_array_bindings_broadcast():
    x = np.array([1.0, 2.0])[:, None]
    t = np.array([3.0, 4.0, 5.0])[None, :]
    out = evaluate(parse_expression("x*t + 1"), {"x": x, "t": t})
    assert out.shape == (2, 3)
    assert out[1, 2] == 11.0


def test_constant_broadcasts_to_bound_array():
    out = evaluate(parse_expression("2"), {"t": np.linspace(0.0, 1.0, 4)})
    assert out.shape == (4,)
    assert np.all(out == 2.0)


def test_unclosed_call_reports_end_offset():
    with pytest.raises(ExprSyntaxError) as excinfo:
        parse_expression("sin(t")
    assert excinfo.value.offset == 5


def test_empty_expression():
    with pytest.raises(ExprSyntaxError) as excinfo:
        parse_expression("   ")
    assert excinfo.value.offset == 0


def test_unknown_identifier_offset():
    with pytest.raises(ExprUnknownIdentifier) as excinfo:
        parse_expression("1 + z")
    assert excinfo.value.offset == 4


def test_unknown_function():
    with pytest.raises(ExprUnknownIdentifier):
        parse_expression("tan(t)")


def test_arity_error():
    with pytest.raises(ExprArityError):
        parse_expression("sin(t, x)")


def test_errors_are_value_errors():
    with pytest.raises(ValueError):
        parse_expression("t +* 2")


def test_variable_exponent_needs_nonnegative_base():
    with pytest.raises(ExprSyntaxError):
        parse_expression("x^t")
    assert value("t^t", t=2.0) == 4.0


@pytest.mark.parametrize("src, offset", [("x^t", 0), ("1 + x^t", 4), ("sin(t) * (2 + x^t)", 14), ("t^t + x^k", 6)])
def test_variable_exponent_error_points_at_power(src, offset):
    with pytest.raises(ExprSyntaxError) as info:
        parse_expression(src)
    assert info.value.offset == offset


@pytest.mark.parametrize(
    "src, bindings",
    [
        ("ln(t)", {"t": 0.0}),
        ("1/t", {"t": 0.0}),
        ("sqrt(t-2)", {"t": 1.0}),
        ("(t-2)^0.5", {"t": 1.0}),
        ("t^(-1)", {"t": 0.0}),
    ],
)
def test_domain_errors(src, bindings):
    with pytest.raises(ExprDomainError):
        evaluate(parse_expression(src), bindings)


def test_unbound_variable_is_domain_error():
    with pytest.raises(ExprDomainError):
        value("x+1", t=1.0)


@pytest.mark.parametrize(
    "src",
    ["3+cos(k*t)", "t^(-1)", "t-(x-1)", "-(t+1)^2", "2*t^4", "exp(-t)/(1+t^2)", "t/2", "(1+k*t)*sin(x)"],
)
def test_unparse_reparses_to_same_tree(src):
    ast = parse_expression(src)
    assert parse_expression(unparse(ast)) == ast


def test_free_variables():
    assert free_variables(parse_expression("x*t+k")) == {"x", "t", "k"}
    assert free_variables(parse_expression("pi*2")) == frozenset()


def test_sign_analysis():
    assert not may_be_negative(parse_expression("t^2+exp(x)"))
    assert may_be_negative(parse_expression("x"))
    assert may_be_negative(parse_expression("cos(t)"))
    assert not may_be_negative(parse_expression("x^2"))


def test_signed_power():
    assert spow(-8.0, 1.0 / 3.0) == pytest.approx(-2.0)
    assert spow(0.0, 5.0) == 0.0
    np.testing.assert_allclose(spow(np.array([-1.0, 4.0]), 0.5), [-1.0, 2.0])


def test_numeric_derivative():
    assert diff_numeric(parse_expression("t^2"), "t", 3.0) == pytest.approx(6.0, rel=1e-6)
    d = diff_numeric(parse_expression("x*t"), "t", 2.0, bindings={"x": 5.0})
    assert d == pytest.approx(5.0, rel=1e-6)


def test_as_function():
    f = as_function("t^2")
    assert f(3.0) == 9.0
    assert f.derivative(3.0) == pytest.approx(6.0, rel=1e-6)
    g = as_function("sin(x)", var="x")
    np.testing.assert_allclose(g(np.array([0.0, math.pi / 2])), [0.0, 1.0], atol=1e-15)
    h = as_function(lambda t: t + 1)
    assert h(1.0) == 2.0
