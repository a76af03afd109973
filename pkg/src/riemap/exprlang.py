"""A small arithmetic language for metric entries and map components.

Grammar (whitespace insignificant)::

    expr     := term (('+' | '-') term)*
    term     := unary (('*' | '/') unary)*
    unary    := '-' unary | power
    power    := atom ('^' exponent)?
    exponent := '-'? (INT | '(' exponent ')') ('^' exponent)?
    atom     := NUMBER | 'x' INT | 'pi' | FUNC '(' expr ')' | '(' expr ')'
    FUNC     := sin | cos | exp | sqrt | log

Exponents must fold to an integer at parse time. Evaluation works on floats,
numpy arrays and :class:`~riemap.numcore.Dual2` alike.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Sequence

from . import numcore
from .errors import EvaluationError, ExprSyntaxError, UnknownIdentifierError

FUNCTIONS = {
    "sin": numcore.sin,
    "cos": numcore.cos,
    "exp": numcore.exp,
    "sqrt": numcore.sqrt,
    "log": numcore.log,
}


@dataclass(frozen=True)
class Const:
    value: float
    offset: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Var:
    index: int  # 1-based, as written
    offset: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Neg:
    operand: "Node"
    offset: int = field(default=0, compare=False)


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"
    offset: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Pow:
    base: "Node"
    exponent: int
    offset: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Node"
    offset: int = field(default=0, compare=False)


Node = Const | Var | Neg | BinOp | Pow | Call


@dataclass(frozen=True)
class Expr:
    """Parsed expression over variables x1..x{arity}."""

    ast: Node
    arity: int
    source: str = field(default="", compare=False)

    def __str__(self):
        return to_source(self.ast)

    def __call__(self, args):
        return evaluate(self, args)


_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()]))"
)


def _tokenize(source):
    tokens = []
    pos = 0
    n = len(source)
    while pos < n:
        if source[pos:].strip() == "":
            break
        m = _TOKEN.match(source, pos)
        if m is None or m.end() == pos:
            bad = pos + (len(source[pos:]) - len(source[pos:].lstrip()))
            raise ExprSyntaxError(f"unexpected character {source[bad]!r}", _byte_offset(source, bad))
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), _byte_offset(source, start)))
        pos = m.end()
    tokens.append(("end", "", _byte_offset(source, n)))
    return tokens


def _byte_offset(source, index):
    return len(source[:index].encode("utf-8"))


class _Parser:
    def __init__(self, source, arity):
        self.tokens = _tokenize(source)
        self.i = 0
        self.arity = arity

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, text):
        kind, value, off = self.take()
        if value != text:
            got = "end of input" if kind == "end" else repr(value)
            raise ExprSyntaxError(f"expected {text!r}, got {got}", off)

    def parse(self):
        node = self.expr()
        kind, value, off = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected {value!r}", off)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            _, op, off = self.take()
            node = BinOp(op, node, self.term(), off)
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            _, op, off = self.take()
            node = BinOp(op, node, self.unary(), off)
        return node

    def unary(self):
        kind, value, off = self.peek()
        if kind == "op" and value == "-":
            self.take()
            return Neg(self.unary(), off)
        return self.power()

    def power(self):
        base = self.atom()
        kind, value, off = self.peek()
        if kind == "op" and value == "^":
            self.take()
            return Pow(base, self.exponent(), off)
        return base

    def exponent(self):
        kind, value, off = self.peek()
        sign = 1
        if kind == "op" and value == "-":
            self.take()
            sign = -1
            kind, value, off = self.peek()
        if kind == "num":
            self.take()
            number = float(value)
            if not number.is_integer() or not re.fullmatch(r"\d+", value):
                raise ExprSyntaxError(f"non-integer exponent {value!r}", off)
            e = int(value)
        elif kind == "op" and value == "(":
            self.take()
            e = self.exponent()
            self.expect(")")
        else:
            raise ExprSyntaxError("exponent must be an integer literal", off)
        e *= sign
        kind, value, off2 = self.peek()
        if kind == "op" and value == "^":
            self.take()
            k = self.exponent()
            if k < 0:
                if e not in (1, -1):
                    raise ExprSyntaxError("non-integer exponent", off2)
                e = int(round(e**k))
            else:
                e = e**k
        return e

    def atom(self):
        kind, value, off = self.take()
        if kind == "num":
            return Const(float(value), off)
        if kind == "name":
            if value == "pi":
                return Const(math.pi, off)
            m = re.fullmatch(r"x([1-9]\d*)", value)
            if m:
                index = int(m.group(1))
                if index > self.arity:
                    raise ExprSyntaxError(f"variable {value} exceeds arity {self.arity}", off)
                return Var(index, off)
            if value in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(value, arg, off)
            raise UnknownIdentifierError(f"unknown identifier {value!r}", off)
        if kind == "op" and value == "(":
            node = self.expr()
            self.expect(")")
            return node
        got = "end of input" if kind == "end" else repr(value)
        raise ExprSyntaxError(f"unexpected {got}", off)


def parse(source: str, arity: int) -> Expr:
    if not source or not source.strip():
        raise ExprSyntaxError("empty expression", 0)
    return Expr(_Parser(source, arity).parse(), arity, source)


# Printing. Precedence levels: + - : 1, * / : 2, unary - : 3, ^ : 4, atoms : 5.
def _prec(node):
    if isinstance(node, BinOp):
        return 1 if node.op in "+-" else 2
    if isinstance(node, Neg):
        return 3
    if isinstance(node, Pow):
        return 4
    if isinstance(node, Const) and (node.value < 0 or math.copysign(1.0, node.value) < 0):
        return 3
    return 5


def _wrap(node, min_prec):
    text = to_source(node)
    return f"({text})" if _prec(node) < min_prec else text


def _const_text(v):
    if v == math.pi:
        return "pi"
    if math.isinf(v) or math.isnan(v):
        raise ValueError(f"cannot print non-finite constant {v!r}")
    text = repr(float(v))
    return text


def to_source(node) -> str:
    """Canonical text for an AST; ``parse(to_source(a))`` reproduces ``a``."""
    if isinstance(node, Expr):
        node = node.ast
    if isinstance(node, Const):
        return _const_text(node.value)
    if isinstance(node, Var):
        return f"x{node.index}"
    if isinstance(node, Neg):
        return "-" + _wrap(node.operand, 3)
    if isinstance(node, BinOp):
        p = _prec(node)
        left = _wrap(node.left, p)
        right = _wrap(node.right, p + 1)
        return f"{left} {node.op} {right}"
    if isinstance(node, Pow):
        exp = str(node.exponent) if node.exponent >= 0 else f"({node.exponent})"
        return f"{_wrap(node.base, 5)}^{exp}"
    if isinstance(node, Call):
        return f"{node.func}({to_source(node.arg)})"
    raise TypeError(f"not an expression node: {node!r}")


def _describe(node):
    return f"'{to_source(node)}' (byte offset {node.offset})"


def _eval(node, args):
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        return args[node.index - 1]
    try:
        if isinstance(node, Neg):
            return -_eval(node.operand, args)
        if isinstance(node, BinOp):
            a = _eval(node.left, args)
            b = _eval(node.right, args)
            if node.op == "+":
                return a + b
            if node.op == "-":
                return a - b
            if node.op == "*":
                return a * b
            return numcore.divide(a, b)
        if isinstance(node, Pow):
            return numcore.power(_eval(node.base, args), node.exponent)
        if isinstance(node, Call):
            return FUNCTIONS[node.func](_eval(node.arg, args))
    except EvaluationError as exc:
        if exc.location is None:
            raise EvaluationError(exc.primitive, str(exc).split(": ", 1)[-1], _describe(node)) from None
        raise
    raise TypeError(f"not an expression node: {node!r}")


def _py(node):
    """Python source for ``node``; variables read from the tuple ``x``."""
    if isinstance(node, Const):
        return repr(node.value)
    if isinstance(node, Var):
        return f"x[{node.index - 1}]"
    if isinstance(node, Neg):
        return f"(-{_py(node.operand)})"
    if isinstance(node, BinOp):
        if node.op == "/":
            return f"_divide({_py(node.left)}, {_py(node.right)})"
        return f"({_py(node.left)} {node.op} {_py(node.right)})"
    if isinstance(node, Pow):
        return f"_power({_py(node.base)}, {node.exponent})"
    if isinstance(node, Call):
        return f"_{node.func}({_py(node.arg)})"
    raise TypeError(f"not an expression node: {node!r}")


_SCOPE = {"_divide": numcore.divide, "_power": numcore.power, **{f"_{k}": v for k, v in FUNCTIONS.items()}}


def _compiled(e: Expr):
    fn = e.__dict__.get("_fn")
    if fn is None:
        fn = eval(f"lambda x: {_py(e.ast)}", dict(_SCOPE))
        object.__setattr__(e, "_fn", fn)
    return fn


def evaluate(e: Expr, args: Sequence):
    """Evaluate ``e`` at ``args`` (floats, arrays or Dual2 values).

    The expression is compiled to a Python function on first use; on a
    domain error the tree walk is repeated to locate the subexpression.
    """
    if len(args) != e.arity:
        raise ValueError(f"expected {e.arity} arguments, got {len(args)}")
    try:
        return _compiled(e)(args)
    except EvaluationError:
        return _eval(e.ast, args)


def substitute(e: Expr, replacements: Sequence[Expr]) -> Expr:
    """Replace x_i by ``replacements[i-1]``; the result has the replacements' arity."""
    arity = replacements[0].arity if replacements else 0

    def walk(node):
        if isinstance(node, Var):
            return replacements[node.index - 1].ast
        if isinstance(node, Neg):
            return Neg(walk(node.operand))
        if isinstance(node, BinOp):
            return BinOp(node.op, walk(node.left), walk(node.right))
        if isinstance(node, Pow):
            return Pow(walk(node.base), node.exponent)
        if isinstance(node, Call):
            return Call(node.func, walk(node.arg))
        return node

    return Expr(walk(e.ast), arity)
