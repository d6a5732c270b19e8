import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vuprop import Dim, GridSpec, builtin, eval_on_grid, make_grid, parse_expression
from vuprop.errors import EvaluationError, ExpressionError
from vuprop.models import parse_ast, pretty, eval_ast


def test_builtins():
    assert builtin("bench2d")(0.0, 0.0) == 0.0
    assert builtin("ipsa2d")(0.0, 0.0) == 0.0
    assert builtin("ipsa2d")(1.0, 0.5) == pytest.approx(1 + 5 * math.sin(3) + 0.5)


def test_unknown_builtin_lists_names():
    with pytest.raises(EvaluationError, match="bench2d"):
        builtin("nope")


def test_parser_matches_builtin():
    m = parse_expression("x^2+5*sin(3*x)+a", ["x", "a"])
    assert m(1.0, 0.5) == builtin("ipsa2d")(1.0, 0.5)


def test_identity_variable():
    assert parse_expression("x", ["x"])(7.25) == 7.25


def test_division_by_zero_is_an_error():
    m = parse_expression("1/(x-1)", ["x"])
    with pytest.raises(EvaluationError):
        m(1.0)


def test_precedence_and_associativity():
    m = parse_expression("2-3-4", [])
    assert m.fn() == -5  # left-assoc
    assert parse_expression("2^3^2", []).fn() == 512  # right-assoc
    assert parse_expression("-2^2", []).fn() == -4  # ^ binds tighter than unary -
    assert parse_expression("2*3+4", []).fn() == 10
    assert parse_expression("2+3*4", []).fn() == 14
    assert parse_expression("2^-1", []).fn() == 0.5


def test_functions():
    assert parse_expression("sqrt(abs(-9))", []).fn() == 3.0
    assert parse_expression("cos(0)+exp(0)", []).fn() == 2.0


def test_lexer_error_reports_position():
    with pytest.raises(ExpressionError) as exc:
        parse_expression("1 + $", ["x"])
    assert exc.value.position == 4


def test_parse_error_reports_position():
    with pytest.raises(ExpressionError):
        parse_expression("1 + * 2", [])
    with pytest.raises(ExpressionError, match="unbound variable"):
        parse_expression("x + y", ["x"])
    with pytest.raises(ExpressionError, match="unknown function"):
        parse_expression("tan(x)", ["x"])


_expr_leaves = st.one_of(
    st.floats(0.1, 5.0).map(lambda v: f"{v:.3f}"),
    st.sampled_from(["x", "a"]),
)


def _random_expr(draw, depth=0):
    if depth > 3 or draw(st.booleans()):
        return draw(_expr_leaves)
    kind = draw(st.sampled_from(["+", "-", "*", "/", "neg", "sin", "cos"]))
    left = _random_expr(draw, depth + 1)
    if kind in "+-*/":
        right = _random_expr(draw, depth + 1)
        return f"({left}{kind}{right})"
    if kind == "neg":
        return f"(-{left})"
    return f"{kind}({left})"


@settings(max_examples=100)
@given(st.data())
def test_pretty_print_round_trip(data):
    text = _random_expr(data.draw)
    ast = parse_ast(text, ["x", "a"])
    reparsed = parse_ast(pretty(ast), ["x", "a"])
    x = np.float64(data.draw(st.floats(-3, 3)))
    a = np.float64(data.draw(st.floats(-3, 3)))
    with np.errstate(all="ignore"):
        v1 = eval_ast(ast, (x, a))
        v2 = eval_ast(reparsed, (x, a))
    assert (v1 == v2) or (np.isnan(v1) and np.isnan(v2))


def test_eval_on_grid_identity():
    g = make_grid(GridSpec((Dim("x", 0, 4, 4),)))
    out = eval_on_grid(parse_expression("x", ["x"]), g)
    assert np.allclose(out, [0.5, 1.5, 2.5, 3.5])


def test_eval_on_grid_constant():
    g = make_grid(GridSpec((Dim("x", 0, 1, 3), Dim("a", 0, 1, 2, "alpha"))))
    out = eval_on_grid(parse_expression("3", ["x", "a"]), g)
    assert out.shape == (6,)
    assert np.all(out == 3.0)


def test_eval_on_grid_matches_pointwise_loop():
    g = make_grid(GridSpec((Dim("x", -1, 1, 3), Dim("a", -1, 1, 3, "alpha"))))
    m = builtin("ipsa2d")
    out = eval_on_grid(m, g)
    for j in range(g.size):
        assert out[j] == pytest.approx(m(*g.nodes[j]), abs=0, rel=1e-15)


def test_eval_on_grid_arity_mismatch():
    g = make_grid(GridSpec((Dim("x", 0, 1, 3),)))
    with pytest.raises(EvaluationError, match="arity"):
        eval_on_grid(builtin("ipsa2d"), g)


def test_eval_on_grid_nonfinite_reports_node():
    g = make_grid(GridSpec((Dim("x", 0, 2, 2),)))  # nodes 0.5, 1.5
    m = parse_expression("1/(x-1.5)", ["x"])
    with pytest.raises(EvaluationError, match="flat index 1"):
        eval_on_grid(m, g)


def test_models_are_deterministic():
    m = builtin("bench2d")
    x = np.linspace(-3, 3, 50)
    a = np.linspace(-1, 1, 50)
    assert np.array_equal(m.raw(x, a), m.raw(x, a))
