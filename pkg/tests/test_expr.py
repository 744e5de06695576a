from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from finslerlab import expr
from finslerlab.expr import BinOp, ExprError, LexError, ParseError, Pow, ValidationError, Var
from finslerlab.jet import seed_variables, unit_index


def kinds(src):
    return [(t.kind, t.text) for t in expr.tokenize(src)][:-1]


def test_tokenize_sqrt_expression():
    assert [k for k, _ in kinds("sqrt(y1^2 + y2^2)")] == [
        "ident", "lparen", "ident", "op", "num", "op", "ident", "op", "num", "rparen"]


def test_number_token_value():
    tok = expr.tokenize("2.5e-1")[0]
    assert tok.kind == "num" and tok.value == 0.25


def test_unicode_minus_is_accepted():
    assert expr.evaluate(expr.parse("2 − 3"), [0, 0, 0, 0]) == -1


def test_precedence_and_rational_power():
    node = expr.parse("y1 + y2 * y3")
    assert node == BinOp("+", Var("y", 1), BinOp("*", Var("y", 2), Var("y", 3)))
    p = expr.parse("(y1^4 + y2^4)^(1/4)")
    assert isinstance(p, Pow) and p.exponent == Fraction(1, 4)
    assert expr.parse("y1^1.5").exponent == Fraction(3, 2)
    assert expr.parse("y1^-1").exponent == -1


def test_out_of_range_variable_fails_in_validate_not_lexing():
    node = expr.parse("x3")
    with pytest.raises(ValidationError) as err:
        expr.validate(node, 2)
    assert err.value.span.begin == 0 and err.value.span.end == 2


@pytest.mark.parametrize("src, err, begin", [
    ("y1 +", ParseError, 4),
    ("(y1 + y2", ParseError, 8),
    ("y1 + y2)", ParseError, 7),
    ("y1 ^ (1/9)", ParseError, 5),
    ("y1 $ y2", LexError, 3),
    ("1.2.3", LexError, 0),
    ("z1", ParseError, 0),
    ("y1 y2", ParseError, 3),
])
def test_errors_carry_spans(src, err, begin):
    with pytest.raises(err) as info:
        expr.parse(src)
    span = info.value.span
    assert span.begin == begin
    assert 0 <= span.begin <= span.end <= len(src.encode())


def test_eval_errors_carry_spans():
    with pytest.raises(ExprError) as info:
        expr.evaluate(expr.parse("1 + sqrt(y1 - 5)"), [0, 0, 1, 1])
    assert info.value.span.begin == 4


def test_jet_evaluation():
    env = seed_variables([0, 0], [3, 4], 2)
    v = expr.evaluate(expr.parse("sqrt(y1^2+y2^2)"), env)
    assert v.value == pytest.approx(5)
    env = seed_variables([0, 0], [2, 1], 2)
    v = expr.evaluate(expr.parse("y1"), env)
    assert v.value == 2 and v.partial(unit_index(4, 2)) == 1
    env = seed_variables([0, 0], [1, 0], 2)
    assert expr.evaluate(expr.parse("sqrt(y1^2+y2^2) + 0.3*y1"), env).value == pytest.approx(1.3)


def test_homogeneity_validator():
    assert expr.validate_homogeneity(expr.parse("sqrt(y1^2+y2^2)"), 2).passed
    assert not expr.validate_homogeneity(expr.parse("y1^2"), 2).passed
    assert expr.validate_homogeneity(expr.parse("sqrt(y1^2+y2^2) + x1*y2"), 2).passed


# -- property tests -----------------------------------------------------------

def atoms():
    return st.one_of(
        st.sampled_from(["x1", "x2", "y1", "y2"]),
        st.floats(0.1, 9.0).map(lambda v: f"{v:.3f}"),
    )


def expressions():
    return st.recursive(
        atoms(),
        lambda inner: st.one_of(
            st.tuples(inner, st.sampled_from(["+", "-", "*"]), inner).map(lambda t: f"{t[0]} {t[1]} {t[2]}"),
            inner.map(lambda s: f"({s})"),
            inner.map(lambda s: f"-{s}"),
            st.tuples(inner, st.sampled_from(["2", "3", "(1/2)", "(3/4)"])).map(lambda t: f"({t[0]})^{t[1]}"),
            inner.map(lambda s: f"sqrt(1 + ({s})^2)"),
        ),
        max_leaves=8,
    )


@settings(max_examples=150, deadline=None)
@given(expressions())
def test_parse_print_parse_roundtrip(src):
    first = expr.parse(src)
    printed = expr.to_source(first)
    assert expr.parse(printed) == first
    assert expr.to_source(expr.parse(printed)) == printed


def _plain(src, x1, x2, y1, y2):
    code = src.replace("^", "**").replace("sqrt", "np.sqrt")
    return eval(code, {"np": np, "x1": x1, "x2": x2, "y1": y1, "y2": y2})


@settings(max_examples=100, deadline=None)
@given(expressions(), st.integers(0, 2**31 - 1))
def test_float_agreement_with_first_order_jets(src, seed):
    node = expr.parse(src)
    rng = np.random.default_rng(seed)
    for _ in range(3):
        z = rng.uniform(0.2, 1.5, size=4)
        with np.errstate(all="ignore"):
            try:
                raw = _plain(src, *z)
            except (ZeroDivisionError, OverflowError, TypeError):
                continue
        if isinstance(raw, complex):
            continue
        want = float(raw)
        if not np.isfinite(want) or abs(want) > 1e12:
            continue
        try:
            got = expr.evaluate(node, seed_variables(z[:2], z[2:], 1))
        except ExprError:
            continue
        got = getattr(got, "value", got)
        assert got == pytest.approx(want, rel=1e-12, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.text(alphabet="xy12+-*/^() .sqrt", max_size=20))
def test_every_error_span_lies_in_source(src):
    try:
        expr.validate(expr.parse(src), 2)
    except ExprError as exc:
        assert 0 <= exc.span.begin <= exc.span.end <= len(src.encode())
