import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from translators.errors import ArityError, DomainError, ParseError, UnknownIdentifierError
from translators.fields import analytic_jet, diff, evaluate, evaluate_jet, parse, parse_system, to_string
from translators.fields.expression import BinOp, Call, Neg, Num, Var


def test_soliton_value_at_origin():
    e = parse("ln(1+exp(2*x1))-x1", 2)
    assert evaluate(e, np.array([0.0, 0.0])) == pytest.approx(math.log(2), abs=1e-15)


def test_linear_value():
    assert evaluate(parse("0.5*x1", 1), np.array([2.0])) == 1.0


def test_out_of_range_variable():
    with pytest.raises(UnknownIdentifierError):
        parse("x3", 2)


@pytest.mark.parametrize("source", ["2 x1", "ln(", "1+", "(x1", "x1)", "1..2", "x1 $ 2", ""])
def test_syntax_errors_carry_position(source):
    with pytest.raises(ParseError) as info:
        parse(source, 2)
    assert info.value.line >= 1 and info.value.column >= 1


def test_error_position_on_second_line():
    with pytest.raises(ParseError) as info:
        parse("x1 +\n  * 2", 2)
    assert (info.value.line, info.value.column) == (2, 3)


def test_unknown_function_and_arity():
    with pytest.raises(UnknownIdentifierError):
        parse("cos(x1)", 2)
    with pytest.raises(ArityError):
        parse("exp(x1, x2)", 2)
    with pytest.raises(ArityError):
        parse("exp", 2)


def test_precedence_and_associativity():
    x = np.array([2.0, 3.0])
    assert evaluate(parse("2^3^2", 2), x) == 512.0
    assert evaluate(parse("-x1^2", 2), x) == -4.0
    assert evaluate(parse("x2 - x1 - 1", 2), x) == 0.0
    assert evaluate(parse("x2 / x1 / 2", 2), x) == 0.75
    assert evaluate(parse("1 + 2 * x2 ^ 2", 2), x) == 19.0
    assert evaluate(parse("2^-1", 2), x) == 0.5


def test_functions():
    x = np.array([0.3])
    for name, ref in [("exp", math.exp), ("ln", math.log), ("sinh", math.sinh), ("cosh", math.cosh),
                      ("tanh", math.tanh), ("sqrt", math.sqrt), ("sech", lambda v: 1 / math.cosh(v))]:
        assert evaluate(parse(f"{name}(x1)", 1), x) == pytest.approx(ref(0.3), rel=1e-15)


def test_system_split():
    exprs = parse_system("ln(1+exp(2*x1))-x1\n\n0.5*x2\n", 2)
    assert len(exprs) == 2
    assert parse_system(["x1", "x2"], 2)[1] == Var(1)


@pytest.mark.parametrize("source", ["ln(x1 - 1)", "1/(x1 - 0.5)", "sqrt(x1 - 1)", "(x1 - 1)^0.5"])
def test_domain_errors_name_subexpression(source):
    with pytest.raises(DomainError) as info:
        evaluate(parse(source, 1), np.array([0.5]))
    assert info.value.subexpression


def test_overflow_is_an_error_not_nan():
    with pytest.raises(DomainError):
        evaluate(parse("exp(exp(x1))", 1), np.array([10.0]))


@pytest.mark.parametrize("source", [
    "ln(1 + exp(2 * x1)) - x1", "-x1^2", "(-x1)^2", "x1 - (x2 - 1)", "x1 / (x2 * 3)", "2^3^2", "(2^3)^2",
    "sech(x1) * tanh(x2) / sqrt(1 + x1^2)", "-(x1 + x2)", "0.1 * x1 + 1e-05",
])
def test_round_trip(source):
    e = parse(source, 2)
    assert parse(to_string(e), 2) == e


_leaf = st.one_of(st.builds(Var, st.integers(0, 1)), st.builds(Num, st.floats(0, 100, allow_nan=False)))
_tree = st.recursive(
    _leaf,
    lambda kids: st.one_of(
        st.builds(Neg, kids),
        st.builds(BinOp, st.sampled_from("+-*/^"), kids, kids),
        st.builds(Call, st.sampled_from(["exp", "ln", "tanh", "sech", "sqrt", "sinh", "cosh"]), kids),
    ),
    max_leaves=12,
)


@settings(max_examples=200, deadline=None)
@given(_tree)
def test_round_trip_property(tree):
    printed = to_string(tree)
    again = parse(printed, 2)
    assert to_string(again) == printed
    assert parse(to_string(again), 2) == again


def test_soliton_jet():
    jet = analytic_jet(parse_system(["ln(1+exp(2*x1))-x1", "0.5*x2"], 2), np.array([0.0, 0.0]))
    assert jet.value[0] == pytest.approx(math.log(2), abs=1e-15)
    assert jet.grad[0, 0] == pytest.approx(0.0, abs=1e-15)
    assert jet.hess[0, 0, 0] == pytest.approx(1.0, abs=1e-15)
    jet1 = analytic_jet(parse_system(["ln(1+exp(2*x1))-x1", "0.5*x2"], 2), np.array([1.0, 0.0]))
    assert jet1.grad[0, 0] == pytest.approx(math.tanh(1.0), abs=1e-14)


def test_affine_jet_has_zero_hessian():
    jet = analytic_jet(parse_system(["0.5*x1", "0.3*x2"], 2), np.random.default_rng(0).normal(size=(7, 2)))
    assert np.all(jet.hess == 0.0)


def test_symbolic_matches_forward_mode_and_is_symmetric():
    e = parse("sech(x1*x2) + x1^3 / (2 + x2^2) + sqrt(1 + x1^2) * ln(2 + tanh(x2))", 2)
    x = np.random.default_rng(1).uniform(-1, 1, (50, 2))
    jet = evaluate_jet(e, x)
    for k in range(2):
        assert np.allclose(evaluate(diff(e, k), x), jet.grad[:, k], rtol=1e-13, atol=1e-13)
        for l in range(2):
            assert np.allclose(evaluate(diff(diff(e, k), l), x), jet.hess[:, k, l], rtol=1e-12, atol=1e-12)
    assert np.array_equal(jet.hess, np.swapaxes(jet.hess, -1, -2))


@pytest.mark.parametrize("source", ["ln(1+exp(2*x1))-x1", "sech(x1)*cosh(x2/2) + x1^2.5 / 3", "x1^x2 + sinh(x1*x2)"])
def test_derivatives_against_central_differences(source):
    e = parse(source, 2)
    x = np.random.default_rng(2).uniform(0.5, 1.5, (100, 2))
    errs = []
    for h in (1e-2, 5e-3):
        err = 0.0
        for k in range(2):
            step = np.zeros(2)
            step[k] = h
            fd = (evaluate(e, x + step) - evaluate(e, x - step)) / (2 * h)
            err = max(err, float(np.abs(fd - evaluate_jet(e, x).grad[:, k]).max()))
        errs.append(err)
    assert math.log2(errs[0] / errs[1]) > 1.9
