"""Scalar expressions over sample coordinates.

Grammar (lowest to highest precedence):

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := '-' factor | power
    power  := atom ('^' factor)?
    atom   := number | ident | ident '(' args ')' | '(' expr ')'

'^' binds tighter than unary minus and is right-associative, so -x^2 is
-(x^2) and 2^3^2 is 2^9.  A number directly followed by 'i' is imaginary.
"""
import math
import string
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, Iterable, List, Mapping, Optional, Tuple

import numpy as np

from src.errors import ExpressionError

MAX_INT_POWER = 64


class TokenType(Enum):
    NUMBER = 1
    IDENTIFIER = 2
    OPERATOR = 3
    LPAREN = 4
    RPAREN = 5
    COMMA = 6
    EOL = 7


@dataclass
class Token:
    type: TokenType
    val: Any
    pos: int

    def __str__(self):
        return f"({self.type.name}, {self.val!r})"


# AST

@dataclass(frozen=True)
class Node:
    pos: int = field(default=0, compare=False, repr=False, kw_only=True)

    def accept(self, visitor: "Visitor"):
        return getattr(visitor, f"visit_{type(self).__name__.lower()}")(self)


@dataclass(frozen=True)
class Number(Node):
    value: complex


@dataclass(frozen=True)
class Name(Node):
    name: str


@dataclass(frozen=True)
class Unary(Node):
    op: str
    operand: Node


@dataclass(frozen=True)
class Binary(Node):
    op: str
    left: Node
    right: Node


@dataclass(frozen=True)
class Call(Node):
    name: str
    args: Tuple[Node, ...]


def _choose(a: np.ndarray, b: np.ndarray, smaller: bool) -> np.ndarray:
    pick_a = a.real <= b.real if smaller else a.real >= b.real
    return np.where(pick_a, a, b)


FUNCTIONS: Dict[str, Tuple[int, Callable[..., np.ndarray]]] = {
    "abs": (1, lambda a: np.abs(a).astype(np.complex128)),
    "exp": (1, np.exp),
    "log": (1, np.log),
    "sqrt": (1, np.sqrt),
    "sin": (1, np.sin),
    "cos": (1, np.cos),
    "min": (2, lambda a, b: _choose(a, b, smaller=True)),
    "max": (2, lambda a, b: _choose(a, b, smaller=False)),
    "conj": (1, np.conj),
    "cis": (1, lambda a: np.exp(1j * a)),
}

CONSTANTS: Dict[str, complex] = {"pi": complex(math.pi), "i": 1j}


def coordinate_names(dim: int) -> List[str]:
    return [f"x{k}" for k in range(1, dim + 1)]


# Tokenizer

_NUMBER_START = string.digits + "."
_IDENT_START = string.ascii_letters + "_"
_IDENT_CHARS = _IDENT_START + string.digits


def tokenize(text: str) -> List[Token]:
    """Tokens with byte offsets into the UTF-8 encoded text."""
    tokens = []
    index = 0
    n = len(text)

    def offset(k: int) -> int:
        return len(text[:k].encode("utf-8"))

    while True:
        while index < n and text[index].isspace():
            index += 1
        if index >= n:
            break
        ch = text[index]
        pos = offset(index)
        if ch in "+-*/^":
            tokens.append(Token(TokenType.OPERATOR, ch, pos))
            index += 1
        elif ch == "(":
            tokens.append(Token(TokenType.LPAREN, ch, pos))
            index += 1
        elif ch == ")":
            tokens.append(Token(TokenType.RPAREN, ch, pos))
            index += 1
        elif ch == ",":
            tokens.append(Token(TokenType.COMMA, ch, pos))
            index += 1
        elif ch in _NUMBER_START:
            start = index
            while index < n and (text[index].isdigit() or text[index] == "."):
                index += 1
            if index < n and text[index] in "eE":
                ahead = index + 1
                if ahead < n and text[ahead] in "+-":
                    ahead += 1
                if ahead < n and text[ahead].isdigit():
                    index = ahead
                    while index < n and text[index].isdigit():
                        index += 1
            literal = text[start:index]
            try:
                value = complex(float(literal))
            except ValueError:
                raise ExpressionError(f"malformed number '{literal}'", pos) from None
            if index < n and text[index] == "i" and (index + 1 >= n or text[index + 1] not in _IDENT_CHARS):
                value = complex(0.0, value.real)
                index += 1
            tokens.append(Token(TokenType.NUMBER, value, pos))
        elif ch in _IDENT_START:
            start = index
            while index < n and text[index] in _IDENT_CHARS:
                index += 1
            tokens.append(Token(TokenType.IDENTIFIER, text[start:index], pos))
        else:
            raise ExpressionError(f"invalid character '{ch}'", pos)

    tokens.append(Token(TokenType.EOL, None, offset(n)))
    return tokens


# Parser

class _Parser:
    def __init__(self, tokens: List[Token], names: Optional[Iterable[str]]):
        self.tokens = tokens
        self.index = 0
        self.names = None if names is None else set(names) | set(CONSTANTS)

    def peek(self) -> Token:
        return self.tokens[self.index]

    def next(self) -> Token:
        tok = self.tokens[self.index]
        self.index += 1
        return tok

    def expect(self, type_: TokenType, what: str) -> Token:
        tok = self.next()
        if tok.type != type_:
            found = "end of input" if tok.type == TokenType.EOL else f"'{tok.val}'"
            raise ExpressionError(f"expected {what}, found {found}", tok.pos)
        return tok

    def is_op(self, *ops: str) -> bool:
        tok = self.peek()
        return tok.type == TokenType.OPERATOR and tok.val in ops

    def parse(self) -> Node:
        if self.peek().type == TokenType.EOL:
            raise ExpressionError("empty expression", self.peek().pos)
        node = self.expr()
        tok = self.peek()
        if tok.type != TokenType.EOL:
            raise ExpressionError(f"unexpected '{tok.val}'", tok.pos)
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.is_op("+", "-"):
            tok = self.next()
            node = Binary(tok.val, node, self.term(), pos=tok.pos)
        return node

    def term(self) -> Node:
        node = self.factor()
        while self.is_op("*", "/"):
            tok = self.next()
            node = Binary(tok.val, node, self.factor(), pos=tok.pos)
        return node

    def factor(self) -> Node:
        if self.is_op("-"):
            tok = self.next()
            return Unary("-", self.factor(), pos=tok.pos)
        return self.power()

    def power(self) -> Node:
        node = self.atom()
        if self.is_op("^"):
            tok = self.next()
            node = Binary("^", node, self.factor(), pos=tok.pos)
        return node

    def atom(self) -> Node:
        tok = self.next()
        if tok.type == TokenType.NUMBER:
            return Number(tok.val, pos=tok.pos)
        if tok.type == TokenType.LPAREN:
            node = self.expr()
            self.expect(TokenType.RPAREN, "')'")
            return node
        if tok.type == TokenType.IDENTIFIER:
            if self.peek().type == TokenType.LPAREN:
                return self.call(tok)
            if tok.val in FUNCTIONS:
                raise ExpressionError(f"function '{tok.val}' needs arguments", tok.pos)
            if self.names is not None and tok.val not in self.names:
                raise ExpressionError(f"unknown identifier '{tok.val}'", tok.pos)
            return Name(tok.val, pos=tok.pos)
        if tok.type == TokenType.EOL:
            raise ExpressionError("unexpected end of input", tok.pos)
        raise ExpressionError(f"unexpected '{tok.val}'", tok.pos)

    def call(self, name: Token) -> Node:
        if name.val not in FUNCTIONS:
            raise ExpressionError(f"unknown function '{name.val}'", name.pos)
        self.next()
        args = []
        if self.peek().type != TokenType.RPAREN:
            args.append(self.expr())
            while self.peek().type == TokenType.COMMA:
                self.next()
                args.append(self.expr())
        self.expect(TokenType.RPAREN, "')'")
        arity = FUNCTIONS[name.val][0]
        if len(args) != arity:
            raise ExpressionError(
                f"{name.val}() takes {arity} argument{'s' if arity > 1 else ''}, got {len(args)}",
                name.pos)
        return Call(name.val, tuple(args), pos=name.pos)


def parse_expression(text: str, names: Optional[Iterable[str]] = None) -> Node:
    """Parse ``text``; with ``names`` given, any other identifier is rejected."""
    return _Parser(tokenize(text), names).parse()


# Visitors

class Visitor:
    def visit(self, node: Node):
        return node.accept(self)


def _format_real(x: float) -> str:
    return repr(float(x))


class Printer(Visitor):
    """Fully parenthesized text that parses back to the same tree."""

    def visit_number(self, node: Number) -> str:
        v = complex(node.value)
        if v.imag == 0:
            return _format_real(v.real)
        if v.real == 0:
            return f"{_format_real(v.imag)}i"
        return f"({_format_real(v.real)} + {_format_real(v.imag)}i)"

    def visit_name(self, node: Name) -> str:
        return node.name

    def visit_unary(self, node: Unary) -> str:
        return f"(-{self.visit(node.operand)})"

    def visit_binary(self, node: Binary) -> str:
        return f"({self.visit(node.left)} {node.op} {self.visit(node.right)})"

    def visit_call(self, node: Call) -> str:
        return f"{node.name}({', '.join(self.visit(a) for a in node.args)})"


def print_expression(node: Node) -> str:
    return Printer().visit(node)


def _int_power(base: np.ndarray, n: int) -> np.ndarray:
    result = np.ones_like(base)
    square = base
    k = abs(n)
    while k:
        if k & 1:
            result = result * square
        square = square * square
        k >>= 1
    return result if n >= 0 else 1.0 / result


class Evaluator(Visitor):
    """Complex evaluation over arrays of sample coordinates."""

    def __init__(self, env: Mapping[str, np.ndarray], size: int):
        self.env = env
        self.size = size

    def _full(self, value) -> np.ndarray:
        return np.broadcast_to(np.asarray(value, dtype=np.complex128), (self.size,))

    def visit_number(self, node: Number) -> np.ndarray:
        return self._full(node.value)

    def visit_name(self, node: Name) -> np.ndarray:
        if node.name in self.env:
            return self._full(self.env[node.name])
        if node.name in CONSTANTS:
            return self._full(CONSTANTS[node.name])
        raise ExpressionError(f"unknown identifier '{node.name}'", node.pos)

    def visit_unary(self, node: Unary) -> np.ndarray:
        return -self.visit(node.operand)

    def visit_binary(self, node: Binary) -> np.ndarray:
        left = self.visit(node.left)
        if node.op == "^" and isinstance(node.right, Number):
            v = complex(node.right.value)
            if v.imag == 0 and v.real.is_integer() and abs(v.real) <= MAX_INT_POWER:
                with np.errstate(divide="ignore", invalid="ignore"):
                    return _int_power(left, int(v.real))
        right = self.visit(node.right)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            if node.op == "+":
                return left + right
            if node.op == "-":
                return left - right
            if node.op == "*":
                return left * right
            if node.op == "/":
                return left / right
            return np.power(left, right)

    def visit_call(self, node: Call) -> np.ndarray:
        _, func = FUNCTIONS[node.name]
        args = [self.visit(a) for a in node.args]
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            return np.asarray(func(*args), dtype=np.complex128)


def evaluate(node: Node, env: Mapping[str, np.ndarray], size: Optional[int] = None) -> np.ndarray:
    """Value of the expression at every sample; ``env`` maps names to arrays or scalars."""
    if size is None:
        sizes = [np.size(v) for v in env.values() if np.ndim(v) > 0]
        size = max(sizes, default=1)
    return np.array(Evaluator(env, size).visit(node), dtype=np.complex128)


def free_names(node: Node) -> List[str]:
    """Identifiers an expression reads, in order of first use."""
    seen: List[str] = []

    def walk(n: Node) -> None:
        if isinstance(n, Name) and n.name not in seen and n.name not in CONSTANTS:
            seen.append(n.name)
        elif isinstance(n, Unary):
            walk(n.operand)
        elif isinstance(n, Binary):
            walk(n.left)
            walk(n.right)
        elif isinstance(n, Call):
            for a in n.args:
                walk(a)

    walk(node)
    return seen
