"""Scalar expression parsing and evaluation.

Grammar (highest binding first)::

    power   := atom ('^' unary)?          right-associative
    unary   := '-' unary | power
    term    := unary (('*' | '/') unary)*
    expr    := term (('+' | '-') term)*
    atom    := NUMBER | NAME | NAME '(' expr ')' | '(' expr ')'

Names are plain variables; ``pi`` is *not* the constant 3.14159...
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping, Union

__all__ = [
    "Const",
    "Var",
    "Unary",
    "Binary",
    "Expr",
    "ExprSyntaxError",
    "UnboundVariableError",
    "DomainError",
    "FUNCTIONS",
    "parse",
    "evaluate",
    "free_variables",
    "serialize",
    "substitute",
    "as_expr",
]

FUNCTIONS = ("sin", "cos", "exp", "ln", "sqrt", "abs")


class ExprSyntaxError(ValueError):
    """Malformed expression text. ``offset`` is the 1-based column."""

    def __init__(self, message: str, offset: int, source: str = ""):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset
        self.source = source


class UnboundVariableError(KeyError):
    def __init__(self, name: str):
        super().__init__(name)
        self.name = name

    def __str__(self) -> str:
        return f"unbound variable {self.name!r}"


class DomainError(ArithmeticError):
    """Raised instead of producing NaN or inf."""


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str  # "neg" or one of FUNCTIONS
    arg: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str  # + - * / ^
    left: "Expr"
    right: "Expr"


Expr = Union[Const, Var, Unary, Binary]

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(source: str):
    tokens = []
    pos = 0
    n = len(source)
    while pos < n:
        if source[pos:].strip() == "":
            break
        m = _TOKEN.match(source, pos)
        if m is None or m.lastgroup is None:
            # skip leading blanks so the offset points at the bad character
            bad = pos
            while bad < n and source[bad].isspace():
                bad += 1
            raise ExprSyntaxError(f"unexpected character {source[bad]!r}", bad + 1, source)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens = _tokenize(source)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, message: str, tok=None):
        tok = tok or self.peek()
        return ExprSyntaxError(message, tok[2] + 1, self.source)

    def expect(self, value: str):
        tok = self.peek()
        if tok[0] != "op" or tok[1] != value:
            found = "end of input" if tok[0] == "end" else repr(tok[1])
            raise self.error(f"expected {value!r}, found {found}")
        self.advance()

    def parse(self) -> Expr:
        node = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise self.error(f"unexpected token {tok[1]!r}")
        return node

    def expr(self) -> Expr:
        node = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.advance()[1]
            node = Binary(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.advance()[1]
            node = Binary(op, node, self.unary())
        return node

    def unary(self) -> Expr:
        tok = self.peek()
        if tok[0] == "op" and tok[1] == "-":
            self.advance()
            return Unary("neg", self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        tok = self.peek()
        if tok[0] == "op" and tok[1] == "^":
            self.advance()
            return Binary("^", base, self.unary())
        return base

    def atom(self) -> Expr:
        tok = self.advance()
        kind, text, _ = tok
        if kind == "num":
            return Const(float(text))
        if kind == "name":
            nxt = self.peek()
            if nxt[0] == "op" and nxt[1] == "(":
                if text not in FUNCTIONS:
                    raise self.error(f"unknown function {text!r}", tok)
                self.advance()
                arg = self.expr()
                self.expect(")")
                return Unary(text, arg)
            return Var(text)
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if kind == "end" else repr(text)
        raise self.error(f"unexpected {found}", tok)


def parse(source: str) -> Expr:
    """Parse expression text into an immutable tree."""
    if not isinstance(source, str) or not source.strip():
        raise ExprSyntaxError("empty expression", 1, source if isinstance(source, str) else "")
    return _Parser(source).parse()


def as_expr(value: "Expr | str | float") -> Expr:
    """Coerce text or a number to an expression tree."""
    if isinstance(value, (Const, Var, Unary, Binary)):
        return value
    if isinstance(value, str):
        return parse(value)
    if isinstance(value, (int, float)):
        return Const(float(value))
    raise TypeError(f"cannot interpret {value!r} as an expression")


def free_variables(expr: Expr) -> frozenset:
    if isinstance(expr, Var):
        return frozenset((expr.name,))
    if isinstance(expr, Const):
        return frozenset()
    if isinstance(expr, Unary):
        return free_variables(expr.arg)
    return free_variables(expr.left) | free_variables(expr.right)


def serialize(expr: Expr) -> str:
    """Fully parenthesized canonical text; ``parse(serialize(e)) == e``."""
    if isinstance(expr, Const):
        if not math.isfinite(expr.value):
            raise ValueError("non-finite constants cannot be serialized")
        text = repr(float(expr.value))
        return f"(-{text[1:]})" if expr.value < 0 or text.startswith("-") else text
    if isinstance(expr, Var):
        return expr.name
    if isinstance(expr, Unary):
        if expr.op == "neg":
            return f"(-{serialize(expr.arg)})"
        return f"{expr.op}({serialize(expr.arg)})"
    return f"({serialize(expr.left)} {expr.op} {serialize(expr.right)})"


def substitute(expr: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace variables by expressions (simultaneously)."""
    if isinstance(expr, Var):
        return mapping.get(expr.name, expr)
    if isinstance(expr, Const):
        return expr
    if isinstance(expr, Unary):
        return Unary(expr.op, substitute(expr.arg, mapping))
    return Binary(expr.op, substitute(expr.left, mapping), substitute(expr.right, mapping))


# ---------------------------------------------------------------------------
# numeric kernels shared with diffcalc


def apply_unary(op: str, x: float) -> float:
    if op == "neg":
        return -x
    if op == "sin":
        return math.sin(x)
    if op == "cos":
        return math.cos(x)
    if op == "exp":
        try:
            return math.exp(x)
        except OverflowError:
            raise DomainError(f"exp overflow at {x!r}") from None
    if op == "ln":
        if x <= 0.0:
            raise DomainError(f"ln of non-positive value {x!r}")
        return math.log(x)
    if op == "sqrt":
        if x < 0.0:
            raise DomainError(f"sqrt of negative value {x!r}")
        return math.sqrt(x)
    if op == "abs":
        return abs(x)
    raise ValueError(f"unknown unary operator {op!r}")


def apply_binary(op: str, a: float, b: float) -> float:
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        if b == 0.0:
            raise DomainError("division by zero")
        return a / b
    if op == "^":
        return real_power(a, b)
    raise ValueError(f"unknown binary operator {op!r}")


def real_power(a: float, b: float) -> float:
    if a < 0.0 and not float(b).is_integer():
        raise DomainError(f"negative base {a!r} with non-integer exponent {b!r}")
    if a == 0.0 and b < 0.0:
        raise DomainError("zero raised to a negative power")
    try:
        out = math.pow(a, b)
    except OverflowError:
        raise DomainError(f"overflow in {a!r}^{b!r}") from None
    return out


def evaluate(expr: Expr, env: Mapping[str, float]) -> float:
    """Evaluate with IEEE doubles; domain problems raise :class:`DomainError`."""
    if isinstance(expr, Const):
        return expr.value
    if isinstance(expr, Var):
        try:
            return float(env[expr.name])
        except KeyError:
            raise UnboundVariableError(expr.name) from None
    if isinstance(expr, Unary):
        return apply_unary(expr.op, evaluate(expr.arg, env))
    out = apply_binary(expr.op, evaluate(expr.left, env), evaluate(expr.right, env))
    if not math.isfinite(out):
        raise DomainError(f"non-finite result in {expr.op!r}")
    return out
