"""Expression language for metric definitions.

Grammar (left-associative binary operators)::

    expr  := term (('+' | '-') term)*
    term  := unary (('*' | '/') unary)*
    unary := '-' unary | power
    power := atom ('^' rational)?
    atom  := number | variable | 'sqrt' '(' expr ')' | '(' expr ')'

Variables are ``x1..xn`` and ``y1..yn``.  Exponents are rationals whose
denominator is at most 8, written as ``2``, ``1.5``, ``-1`` or ``(1/4)``.
ASTs evaluate over anything supporting arithmetic: floats, numpy arrays or
:class:`~finslerlab.jet.Jet` objects.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence, Union

import numpy as np

from .jet import Jet, JetError

MAX_DENOMINATOR = 8


@dataclass(frozen=True)
class SourceSpan:
    begin: int
    end: int

    def __post_init__(self):
        if self.begin > self.end:
            raise ValueError("span begin after end")


class ExprError(ValueError):
    def __init__(self, message: str, span: SourceSpan):
        super().__init__(f"{message} at bytes {span.begin}..{span.end}")
        self.message = message
        self.span = span


class LexError(ExprError):
    pass


class ParseError(ExprError):
    pass


class ValidationError(ExprError):
    pass


class EvalError(ExprError):
    pass


# ---------------------------------------------------------------------------
# tokens

@dataclass(frozen=True)
class Token:
    kind: str  # num, ident, op, lparen, rparen, comma, end
    text: str
    span: SourceSpan
    value: float | None = None


_NUMBER = re.compile(r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")
_NUMBERISH = re.compile(r"[0-9.]+(?:[eE][+-]?[0-9.]*)?")
_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_OPS = {"+": "+", "-": "-", "−": "-", "*": "*", "/": "/", "^": "^"}


def tokenize(src: str) -> list[Token]:
    offsets = [0]
    for ch in src:
        offsets.append(offsets[-1] + len(ch.encode("utf-8")))

    def span(i: int, j: int) -> SourceSpan:
        return SourceSpan(offsets[i], offsets[j])

    tokens: list[Token] = []
    i = 0
    while i < len(src):
        ch = src[i]
        if ch.isspace():
            i += 1
            continue
        if ch.isdigit() or ch == ".":
            m = _NUMBERISH.match(src, i)
            text = m.group(0)
            good = _NUMBER.fullmatch(text)
            if good is None:
                raise LexError(f"malformed number {text!r}", span(i, m.end()))
            tokens.append(Token("num", text, span(i, m.end()), float(text)))
            i = m.end()
            continue
        if ch.isalpha() or ch == "_":
            m = _IDENT.match(src, i)
            tokens.append(Token("ident", m.group(0), span(i, m.end())))
            i = m.end()
            continue
        if ch in _OPS:
            tokens.append(Token("op", _OPS[ch], span(i, i + 1)))
        elif ch == "(":
            tokens.append(Token("lparen", ch, span(i, i + 1)))
        elif ch == ")":
            tokens.append(Token("rparen", ch, span(i, i + 1)))
        elif ch == ",":
            tokens.append(Token("comma", ch, span(i, i + 1)))
        else:
            raise LexError(f"unexpected character {ch!r}", span(i, i + 1))
        i += 1
    tokens.append(Token("end", "", span(len(src), len(src))))
    return tokens


# ---------------------------------------------------------------------------
# AST

@dataclass(frozen=True)
class Num:
    value: float
    span: SourceSpan = field(compare=False, default=SourceSpan(0, 0))


@dataclass(frozen=True)
class Var:
    kind: str  # "x" or "y"
    index: int  # 1-based
    span: SourceSpan = field(compare=False, default=SourceSpan(0, 0))


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Ast"
    right: "Ast"
    span: SourceSpan = field(compare=False, default=SourceSpan(0, 0))


@dataclass(frozen=True)
class Neg:
    operand: "Ast"
    span: SourceSpan = field(compare=False, default=SourceSpan(0, 0))


@dataclass(frozen=True)
class Pow:
    base: "Ast"
    exponent: Fraction
    span: SourceSpan = field(compare=False, default=SourceSpan(0, 0))


@dataclass(frozen=True)
class Call:
    name: str
    arg: "Ast"
    span: SourceSpan = field(compare=False, default=SourceSpan(0, 0))


@dataclass(frozen=True)
class Group:
    inner: "Ast"
    span: SourceSpan = field(compare=False, default=SourceSpan(0, 0))


Ast = Union[Num, Var, BinOp, Neg, Pow, Call, Group]

FUNCTIONS = ("sqrt",)
_VARIABLE = re.compile(r"([xy])([1-9][0-9]*)")


class _Parser:
    def __init__(self, tokens: Sequence[Token]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != "end":
            self.pos += 1
        return tok

    def expect(self, kind: str, what: str) -> Token:
        tok = self.peek()
        if tok.kind != kind:
            raise ParseError(f"expected {what}, found {_describe(tok)}", tok.span)
        return self.advance()

    def parse(self) -> Ast:
        node = self.expr()
        tok = self.peek()
        if tok.kind != "end":
            if tok.kind == "rparen":
                raise ParseError("unbalanced ')'", tok.span)
            raise ParseError(f"unexpected {_describe(tok)}", tok.span)
        return node

    def expr(self) -> Ast:
        node = self.term()
        while self.peek().kind == "op" and self.peek().text in "+-":
            op = self.advance().text
            right = self.term()
            node = BinOp(op, node, right, SourceSpan(node.span.begin, right.span.end))
        return node

    def term(self) -> Ast:
        node = self.unary()
        while self.peek().kind == "op" and self.peek().text in "*/":
            op = self.advance().text
            right = self.unary()
            node = BinOp(op, node, right, SourceSpan(node.span.begin, right.span.end))
        return node

    def unary(self) -> Ast:
        tok = self.peek()
        if tok.kind == "op" and tok.text == "-":
            self.advance()
            operand = self.unary()
            return Neg(operand, SourceSpan(tok.span.begin, operand.span.end))
        return self.power()

    def power(self) -> Ast:
        base = self.atom()
        if self.peek().kind == "op" and self.peek().text == "^":
            self.advance()
            exponent, end = self.rational()
            return Pow(base, exponent, SourceSpan(base.span.begin, end))
        return base

    def rational(self) -> tuple[Fraction, int]:
        tok = self.peek()
        begin = tok.span.begin
        if tok.kind == "lparen":
            self.advance()
            sign = self._sign()
            num = self.expect("num", "exponent numerator")
            value = sign * Fraction(num.text)
            if self.peek().kind == "op" and self.peek().text == "/":
                self.advance()
                dsign = self._sign()
                den = self.expect("num", "exponent denominator")
                d = Fraction(den.text)
                if d == 0:
                    raise ParseError("zero exponent denominator", den.span)
                value = value / (dsign * d)
            close = self.peek()
            if close.kind != "rparen":
                raise ParseError(f"expected ')' to close exponent, found {_describe(close)}", close.span)
            self.advance()
            end = close.span.end
        else:
            sign = self._sign()
            num = self.expect("num", "rational exponent")
            value = sign * Fraction(num.text)
            end = num.span.end
        if value.denominator > MAX_DENOMINATOR:
            raise ParseError(
                f"exponent {value} is not a rational with denominator <= {MAX_DENOMINATOR}",
                SourceSpan(begin, end),
            )
        return value, end

    def _sign(self) -> int:
        if self.peek().kind == "op" and self.peek().text == "-":
            self.advance()
            return -1
        return 1

    def atom(self) -> Ast:
        tok = self.peek()
        if tok.kind == "num":
            self.advance()
            return Num(tok.value, tok.span)
        if tok.kind == "ident":
            self.advance()
            if tok.text in FUNCTIONS:
                self.expect("lparen", f"'(' after {tok.text}")
                arg = self.expr()
                close = self.peek()
                if close.kind != "rparen":
                    raise ParseError(f"unbalanced '(' in call to {tok.text}", close.span)
                self.advance()
                return Call(tok.text, arg, SourceSpan(tok.span.begin, close.span.end))
            m = _VARIABLE.fullmatch(tok.text)
            if m is None:
                raise ParseError(f"unknown identifier {tok.text!r}", tok.span)
            return Var(m.group(1), int(m.group(2)), tok.span)
        if tok.kind == "lparen":
            self.advance()
            inner = self.expr()
            close = self.peek()
            if close.kind != "rparen":
                raise ParseError(f"unbalanced '(' (found {_describe(close)})", close.span)
            self.advance()
            return Group(inner, SourceSpan(tok.span.begin, close.span.end))
        raise ParseError(f"unexpected {_describe(tok)}", tok.span)


def _describe(tok: Token) -> str:
    return "end of input" if tok.kind == "end" else repr(tok.text)


def parse(source: str | Sequence[Token]) -> Ast:
    tokens = tokenize(source) if isinstance(source, str) else list(source)
    return _Parser(tokens).parse()


def to_source(node: Ast) -> str:
    """Pretty-print; only the tree's own groups get parentheses."""
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, Var):
        return f"{node.kind}{node.index}"
    if isinstance(node, BinOp):
        return f"{to_source(node.left)} {node.op} {to_source(node.right)}"
    if isinstance(node, Neg):
        return f"-{to_source(node.operand)}"
    if isinstance(node, Pow):
        e = node.exponent
        ex = str(e.numerator) if e.denominator == 1 and e >= 0 else f"({e.numerator}/{e.denominator})"
        return f"{to_source(node.base)}^{ex}"
    if isinstance(node, Call):
        return f"{node.name}({to_source(node.arg)})"
    if isinstance(node, Group):
        return f"({to_source(node.inner)})"
    raise TypeError(f"not an AST node: {node!r}")


def walk(node: Ast):
    yield node
    for child in _children(node):
        yield from walk(child)


def _children(node: Ast) -> tuple:
    if isinstance(node, BinOp):
        return (node.left, node.right)
    if isinstance(node, (Neg,)):
        return (node.operand,)
    if isinstance(node, Pow):
        return (node.base,)
    if isinstance(node, Call):
        return (node.arg,)
    if isinstance(node, Group):
        return (node.inner,)
    return ()


def validate(node: Ast, dim: int, allow_y: bool = True) -> Ast:
    """Check variable indices against ``dim`` (and optionally forbid y)."""
    for sub in walk(node):
        if isinstance(sub, Var):
            if sub.index > dim:
                raise ValidationError(f"variable {sub.kind}{sub.index} exceeds dimension {dim}", sub.span)
            if sub.kind == "y" and not allow_y:
                raise ValidationError(f"{sub.kind}{sub.index} not allowed in a position-only field", sub.span)
    return node


def uses_kind(node: Ast, kind: str) -> bool:
    return any(isinstance(s, Var) and s.kind == kind for s in walk(node))


# ---------------------------------------------------------------------------
# evaluation

def _sqrt(v, span):
    if isinstance(v, Jet):
        return v.sqrt()
    if np.any(np.asarray(v) <= 0):
        raise EvalError("sqrt of a non-positive value", span)
    return np.sqrt(v)


def _power(v, e: Fraction, span):
    if isinstance(v, Jet):
        if e.denominator == 1 and e >= 0:
            return v ** int(e)
        return v.pow_rational(e)
    arr = np.asarray(v, dtype=float)
    if e.denominator != 1 and np.any(arr <= 0):
        raise EvalError("fractional power of a non-positive value", span)
    if e < 0 and np.any(arr == 0):
        raise EvalError("negative power of zero", span)
    if e.denominator == 1:
        return arr ** int(e) if e >= 0 else 1.0 / arr ** int(-e)
    return arr ** float(e)


def evaluate(node: Ast, env: Sequence):
    """Evaluate over ``env = (x1..xn, y1..yn)``; values may be jets or floats."""
    n = len(env) // 2
    try:
        if isinstance(node, Num):
            return node.value
        if isinstance(node, Var):
            return env[node.index - 1 if node.kind == "x" else n + node.index - 1]
        if isinstance(node, Group):
            return evaluate(node.inner, env)
        if isinstance(node, Neg):
            return -evaluate(node.operand, env)
        if isinstance(node, Call):
            return _sqrt(evaluate(node.arg, env), node.span)
        if isinstance(node, Pow):
            return _power(evaluate(node.base, env), node.exponent, node.span)
        if isinstance(node, BinOp):
            a = evaluate(node.left, env)
            b = evaluate(node.right, env)
            if node.op == "+":
                return a + b
            if node.op == "-":
                return a - b
            if node.op == "*":
                return a * b
            if not isinstance(b, Jet) and np.any(np.asarray(b) == 0):
                raise EvalError("division by zero", node.span)
            return a / b
    except JetError as exc:
        raise EvalError(str(exc), node.span) from exc
    raise TypeError(f"not an AST node: {node!r}")


@dataclass
class HomogeneityReport:
    passed: bool
    samples: int
    failures: list[dict]
    max_defect: float


def validate_homogeneity(
    node: Ast,
    dim: int,
    samples: int = 50,
    seed: int = 0,
    lo: Sequence[float] | None = None,
    hi: Sequence[float] | None = None,
) -> HomogeneityReport:
    """Probe F(x, t y) = t F(x, y) at random points and random t in (0.1, 10)."""
    rng = np.random.default_rng(seed)
    lo = np.full(dim, -0.5) if lo is None else np.asarray(lo, float)
    hi = np.full(dim, 0.5) if hi is None else np.asarray(hi, float)
    failures = []
    worst = 0.0
    for k in range(samples):
        x = rng.uniform(lo, hi)
        y = rng.normal(size=dim)
        t = rng.uniform(0.1, 10.0)
        try:
            f1 = float(evaluate(node, list(x) + list(y)))
            ft = float(evaluate(node, list(x) + list(t * y)))
        except ExprError as exc:
            failures.append({"sample": k, "x": x.tolist(), "y": y.tolist(), "error": str(exc)})
            continue
        defect = abs(ft - t * f1) / (1.0 + abs(f1))
        worst = max(worst, defect)
        if defect > 1e-9:
            failures.append({"sample": k, "x": x.tolist(), "y": y.tolist(), "t": t, "defect": defect})
    return HomogeneityReport(not failures, samples, failures, worst)
