import cmath

import numpy as np
import pytest

from src.errors import ExpressionError
from src.expressions import (
    TokenType,
    coordinate_names,
    evaluate,
    free_names,
    parse_expression,
    print_expression,
    tokenize,
)


def value(text: str, **env) -> complex:
    return complex(evaluate(parse_expression(text), env)[0])


def test_tokens_carry_offsets():
    tokens = tokenize("x1 + 2.5e-3")
    assert [t.type for t in tokens] == [TokenType.IDENTIFIER, TokenType.OPERATOR,
                                        TokenType.NUMBER, TokenType.EOL]
    assert [t.pos for t in tokens] == [0, 3, 5, 11]
    assert tokens[2].val == pytest.approx(2.5e-3)


def test_offsets_are_in_bytes():
    # U+3000 is whitespace taking three bytes in UTF-8
    tokens = tokenize("\u3000x1")
    assert tokens[0].pos == 3
    with pytest.raises(ExpressionError) as info:
        tokenize("\u3000x1 $")
    assert info.value.offset == 6


@pytest.mark.parametrize("text,expected", [
    ("1 + 2*3^2", 19),
    ("(1 + 2) * 3", 9),
    ("-2^2", -4),
    ("2^3^2", 512),
    ("8 / 4 / 2", 1),
    ("2 - 3 - 4", -5),
])
def test_precedence_and_associativity(text, expected):
    assert value(text) == pytest.approx(expected)


def test_imaginary_literals_and_constants():
    assert value("2i") == 2j
    assert value("3 * i") == 3j
    assert value("cis(pi)") == pytest.approx(-1.0)
    assert value("abs(3 + 4i)") == pytest.approx(5.0)
    assert value("min(2, 1 + 5i)") == pytest.approx(1 + 5j)


def test_evaluation_over_samples():
    x = np.array([1.0, 2.0, 3.0])
    out = evaluate(parse_expression("x1^2 - 1"), {"x1": x})
    np.testing.assert_allclose(out, [0.0, 3.0, 8.0])
    assert evaluate(parse_expression("x1 * 0 + 2"), {"x1": x}).shape == (3,)


def test_negative_integer_power():
    assert value("x1^-2", x1=np.array([2.0])) == pytest.approx(0.25)


def test_printer_parses_back():
    node = parse_expression("-x1^2 + sin(x2) / 3")
    printed = print_expression(node)
    assert printed == "((-(x1 ^ 2.0)) + (sin(x2) / 3.0))"
    assert parse_expression(printed) == node


@pytest.mark.parametrize("text,message", [
    ("sin", "needs arguments"),
    ("min(1)", "takes 2 arguments"),
    ("foo(1)", "unknown function"),
    ("(1 + 2", r"expected '\)'"),
    ("1 2", "unexpected"),
    ("1.2.3", "malformed number"),
])
def test_syntax_errors(text, message):
    with pytest.raises(ExpressionError, match=message):
        parse_expression(text)


def test_unknown_identifier_offset():
    with pytest.raises(ExpressionError) as info:
        parse_expression("x1 + y", names=coordinate_names(1))
    assert info.value.offset == 5
    assert "byte 5" in info.value.detail


def test_empty_expression():
    with pytest.raises(ExpressionError) as info:
        parse_expression("  ")
    assert info.value.offset == 2


def test_free_names_skip_constants():
    assert free_names(parse_expression("x2 * x1 + pi * x2 + i")) == ["x2", "x1"]
    assert coordinate_names(2) == ["x1", "x2"]


def test_unbound_name_at_evaluation():
    with pytest.raises(ExpressionError):
        evaluate(parse_expression("t"), {"x1": np.zeros(2)})


def test_cis_is_unit_modulus():
    assert abs(value("cis(0.7)")) == pytest.approx(1.0)
    assert value("cis(0.7)") == pytest.approx(cmath.exp(0.7j))
