"""Small arithmetic-expression language for user-supplied coefficients.

Grammar (``^`` binds tighter than unary minus and is right associative)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' ['-'] INT)?
    atom   := NUMBER | NAME | NAME '(' expr ')' | '(' expr ')'

Variables are ``x1..xd`` and ``u1..uN``; ``t`` is accepted only when the
expression is parsed with ``allow_t=True`` (boundary data).  Any other bare
name is a parameter, resolved at evaluation time; ``pi`` is built in.
Evaluation is vectorised with numpy and raises on non-finite results.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "sqrt": np.sqrt,
    "abs": np.abs,
}
CONSTANTS = {"pi": np.pi}


class ExprError(ValueError):
    """Base class for expression errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, pos: int, source: str = ""):
        self.pos = pos
        self.source = source
        super().__init__(f"{message} at position {pos}")


class UnknownVariableError(ExprSyntaxError):
    pass


class NonFiniteError(ExprError, ArithmeticError):
    pass


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    kind: str  # 'x', 'u' or 't'
    index: int  # zero based


@dataclass(frozen=True)
class Param:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Pow:
    base: "Node"
    exponent: int


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Node"


Node = Union[Num, Var, Param, Neg, BinOp, Pow, Call]


@dataclass(frozen=True)
class Expr:
    """Parsed expression together with its declared shape."""

    source: str
    root: Node
    d: int
    N: int

    def params(self) -> set[str]:
        out: set[str] = set()
        stack = [self.root]
        while stack:
            node = stack.pop()
            if isinstance(node, Param):
                out.add(node.name)
            elif isinstance(node, BinOp):
                stack += [node.left, node.right]
            elif isinstance(node, (Neg, Call)):
                stack.append(node.arg)
            elif isinstance(node, Pow):
                stack.append(node.base)
        return out


_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()]))"
)
_VAR = re.compile(r"^([xu])(\d+)$")


def _tokenize(source: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(source):
        if source[pos:].strip() == "":
            break
        m = _TOKEN.match(source, pos)
        if m is None or m.end() == pos:
            # skip whitespace to report the offending character
            bad = pos + len(source[pos:]) - len(source[pos:].lstrip())
            raise ExprSyntaxError(f"unexpected character {source[bad]!r}", bad, source)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source: str, d: int, N: int, allow_t: bool):
        self.source = source
        self.d = d
        self.N = N
        self.allow_t = allow_t
        self.tokens = _tokenize(source)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, message, tok=None):
        tok = tok or self.peek()
        what = "end of input" if tok[0] == "end" else repr(tok[1])
        return ExprSyntaxError(f"{message} (found {what})", tok[2], self.source)

    def expect_op(self, op):
        tok = self.take()
        if tok[0] != "op" or tok[1] != op:
            raise self.error(f"expected {op!r}", tok)

    def parse(self) -> Node:
        node = self.expr()
        if self.peek()[0] != "end":
            raise self.error("unexpected token")
        return node

    def expr(self):
        node = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.take()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.peek()[0] == "op" and self.peek()[1] == "-":
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            sign = 1
            if self.peek()[0] == "op" and self.peek()[1] == "-":
                self.take()
                sign = -1
            tok = self.take()
            if tok[0] != "num" or not re.fullmatch(r"\d+", tok[1]):
                raise self.error("exponent must be an integer literal", tok)
            return Pow(base, sign * int(tok[1]))
        return base

    def atom(self):
        tok = self.take()
        kind, text, pos = tok
        if kind == "num":
            return Num(float(text))
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        if kind == "name":
            if text in FUNCTIONS:
                nxt = self.peek()
                if nxt[0] != "op" or nxt[1] != "(":
                    raise self.error(f"function {text!r} needs an argument")
                self.take()
                arg = self.expr()
                self.expect_op(")")
                return Call(text, arg)
            if self.peek()[0] == "op" and self.peek()[1] == "(":
                raise ExprSyntaxError(f"unknown function {text!r}", pos, self.source)
            m = _VAR.match(text)
            if m:
                kind_v, idx = m.group(1), int(m.group(2))
                limit = self.d if kind_v == "x" else self.N
                if idx < 1 or idx > limit:
                    raise UnknownVariableError(
                        f"unknown variable {text!r} (declared d={self.d}, N={self.N})", pos, self.source
                    )
                return Var(kind_v, idx - 1)
            if text == "t":
                if not self.allow_t:
                    raise UnknownVariableError("time variable 't' not allowed here", pos, self.source)
                return Var("t", 0)
            if text in CONSTANTS:
                return Num(CONSTANTS[text])
            return Param(text)
        raise self.error("expected a number, name or '('", tok)


def parse_expr(source: str, d: int, N: int, allow_t: bool = False) -> Expr:
    if not source or not source.strip():
        raise ExprSyntaxError("empty expression", 0, source)
    root = _Parser(source, d, N, allow_t).parse()
    return Expr(source, root, d, N)


def _eval(node: Node, x, u, t, params):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        if node.kind == "x":
            return x[..., node.index]
        if node.kind == "u":
            return u[..., node.index]
        return t
    if isinstance(node, Param):
        try:
            return float(params[node.name])
        except KeyError:
            raise ExprError(f"parameter {node.name!r} has no value") from None
    if isinstance(node, Neg):
        return -_eval(node.arg, x, u, t, params)
    if isinstance(node, BinOp):
        a = _eval(node.left, x, u, t, params)
        b = _eval(node.right, x, u, t, params)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        return np.divide(a, b)
    if isinstance(node, Pow):
        base = _eval(node.base, x, u, t, params)
        if node.exponent < 0:
            return np.divide(1.0, np.power(base, -node.exponent))
        return np.power(base, node.exponent)
    if isinstance(node, Call):
        return FUNCTIONS[node.func](_eval(node.arg, x, u, t, params))
    raise TypeError(f"bad node {node!r}")


def evaluate(e: Expr, x, u, params: Mapping[str, float] | None = None, t: float = 0.0) -> np.ndarray:
    """Vectorised evaluation; ``x`` has shape (..., d), ``u`` shape (..., N)."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape[-1:] != (e.d,) and e.d > 0:
        raise ValueError(f"x has trailing dimension {x.shape[-1:]}, expected {e.d}")
    if u.shape[-1:] != (e.N,) and e.N > 0:
        raise ValueError(f"u has trailing dimension {u.shape[-1:]}, expected {e.N}")
    batch = np.broadcast_shapes(x.shape[:-1], u.shape[:-1])
    with np.errstate(all="ignore"):
        out = _eval(e.root, x, u, t, params or {})
    out = np.broadcast_to(np.asarray(out, dtype=float), batch)
    if not np.all(np.isfinite(out)):
        raise NonFiniteError(f"non-finite value evaluating {e.source!r}")
    return out


def eval_expr(e: Expr, x, u, params: Mapping[str, float] | None = None, t: float = 0.0) -> float:
    """Evaluate at a single point and return a Python float."""
    x = np.atleast_1d(np.asarray(x, dtype=float)).reshape(e.d) if e.d else np.zeros(0)
    u = np.atleast_1d(np.asarray(u, dtype=float)).reshape(e.N) if e.N else np.zeros(0)
    return float(evaluate(e, x, u, params, t))
