"""Tiny arithmetic language for u-dependent model characteristics.

Grammar, lowest to highest precedence::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := "-" unary | power
    power  := atom ("^" unary)?          # right associative
    atom   := number | "u" | name "(" expr ("," expr)* ")" | "(" expr ")"

The only variable is ``u``.  Functions: exp, log, sqrt, abs (unary) and
min, max (binary).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

__all__ = [
    "Num", "Var", "Neg", "BinOp", "Call", "Expr",
    "ParseError", "EvalError", "parse", "evaluate", "to_text",
]

FUNCTIONS = {"exp": 1, "log": 1, "sqrt": 1, "abs": 1, "min": 2, "max": 2}


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str = "u"


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple

    def __post_init__(self):
        if self.func not in FUNCTIONS:
            raise ValueError(f"unknown function {self.func!r}")
        if len(self.args) != FUNCTIONS[self.func]:
            raise ValueError(f"{self.func} takes {FUNCTIONS[self.func]} argument(s)")


Expr = Union[Num, Var, Neg, BinOp, Call]


class ParseError(ValueError):
    """Syntax error; ``offset`` is the byte offset into the source text."""

    def __init__(self, message: str, offset: int, text: str = ""):
        self.offset = offset
        self.text = text
        super().__init__(f"{message} at offset {offset}")


class EvalError(ArithmeticError):
    """Domain error raised while evaluating ``expr``."""

    def __init__(self, message: str, expr: Expr):
        self.expr = expr
        super().__init__(f"{message} in {to_text(expr)}")


_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),]))"
)


def _tokenize(text: str):
    tokens = []
    pos = 0
    while True:
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            rest = text[pos:]
            if rest.strip() == "":
                break
            off = pos + (len(rest) - len(rest.lstrip()))
            raise ParseError(f"unexpected character {text[off]!r}", _byte_offset(text, off), text)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


def _byte_offset(text: str, index: int) -> int:
    return len(text[:index].encode("utf-8"))


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, expected: str):
        kind, value, start = self.peek()
        found = "end of input" if kind == "end" else repr(value)
        raise ParseError(f"expected {expected}, found {found}", _byte_offset(self.text, start), self.text)

    def expect(self, op: str):
        kind, value, _ = self.peek()
        if kind != "op" or value != op:
            self.error(repr(op))
        self.advance()

    def parse(self) -> Expr:
        e = self.expr()
        if self.peek()[0] != "end":
            self.error("operator or end of input")
        return e

    def expr(self) -> Expr:
        left = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.advance()[1]
            left = BinOp(op, left, self.term())
        return left

    def term(self) -> Expr:
        left = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.advance()[1]
            left = BinOp(op, left, self.unary())
        return left

    def unary(self) -> Expr:
        if self.peek()[:2] == ("op", "-"):
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.peek()[:2] == ("op", "^"):
            self.advance()
            return BinOp("^", base, self.unary())
        return base

    def atom(self) -> Expr:
        kind, value, start = self.peek()
        if kind == "num":
            self.advance()
            return Num(float(value))
        if kind == "name":
            if value == "u":
                self.advance()
                return Var()
            if value not in FUNCTIONS:
                raise ParseError(f"unknown name {value!r}", _byte_offset(self.text, start), self.text)
            self.advance()
            self.expect("(")
            args = [self.expr()]
            while self.peek()[:2] == ("op", ","):
                self.advance()
                args.append(self.expr())
            if len(args) != FUNCTIONS[value]:
                raise ParseError(
                    f"{value} takes {FUNCTIONS[value]} argument(s), got {len(args)}",
                    _byte_offset(self.text, start), self.text)
            self.expect(")")
            return Call(value, tuple(args))
        if kind == "op" and value == "(":
            self.advance()
            e = self.expr()
            self.expect(")")
            return e
        self.error("number, 'u', function call or '('")


def parse(text: str) -> Expr:
    """Parse ``text`` into an expression tree.

    Raises
    ------
    ParseError
        With the byte offset of the offending token.
    """
    return _Parser(text).parse()


def _finite(x: float, e: Expr) -> float:
    if not math.isfinite(x):
        raise EvalError("non-finite result", e)
    return x


def evaluate(e: Expr, u: float) -> float:
    """Evaluate ``e`` at the decision value ``u`` with real semantics."""
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        return float(u)
    if isinstance(e, Neg):
        return -evaluate(e.operand, u)
    if isinstance(e, BinOp):
        a = evaluate(e.left, u)
        b = evaluate(e.right, u)
        op = e.op
        if op == "+":
            return _finite(a + b, e)
        if op == "-":
            return _finite(a - b, e)
        if op == "*":
            return _finite(a * b, e)
        if op == "/":
            if b == 0.0:
                raise EvalError("division by zero", e)
            return _finite(a / b, e)
        if a < 0.0 and not float(b).is_integer():
            raise EvalError("negative base with non-integer exponent", e)
        if a == 0.0 and b < 0.0:
            raise EvalError("division by zero", e)
        try:
            return _finite(math.pow(a, b), e)
        except OverflowError:
            raise EvalError("non-finite result", e) from None
    if isinstance(e, Call):
        args = [evaluate(a, u) for a in e.args]
        f = e.func
        x = args[0]
        if f == "exp":
            try:
                return _finite(math.exp(x), e)
            except OverflowError:
                raise EvalError("non-finite result", e) from None
        if f == "log":
            if x <= 0.0:
                raise EvalError("log of non-positive value", e)
            return math.log(x)
        if f == "sqrt":
            if x < 0.0:
                raise EvalError("sqrt of negative value", e)
            return math.sqrt(x)
        if f == "abs":
            return abs(x)
        if f == "min":
            return min(x, args[1])
        return max(x, args[1])
    raise TypeError(f"not an expression node: {e!r}")


# binding strength used by the printer
_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def _prec(e: Expr) -> int:
    if isinstance(e, BinOp):
        return _PREC[e.op]
    if isinstance(e, Neg):
        return _PREC["neg"]
    return 5


def _wrap(e: Expr, needs: bool) -> str:
    s = to_text(e)
    return f"({s})" if needs else s


def to_text(e: Expr) -> str:
    """Canonical printer; ``parse(to_text(e)) == e`` for every tree."""
    if isinstance(e, Num):
        return repr(float(e.value))
    if isinstance(e, Var):
        return "u"
    if isinstance(e, Neg):
        return "-" + _wrap(e.operand, _prec(e.operand) < 3)
    if isinstance(e, BinOp):
        p = _PREC[e.op]
        if e.op == "^":
            return f"{_wrap(e.left, _prec(e.left) <= 4)}^{_wrap(e.right, _prec(e.right) < 3)}"
        return f"{_wrap(e.left, _prec(e.left) < p)} {e.op} {_wrap(e.right, _prec(e.right) <= p)}"
    if isinstance(e, Call):
        return f"{e.func}({', '.join(to_text(a) for a in e.args)})"
    raise TypeError(f"not an expression node: {e!r}")
