"""Small arithmetic expression language for scalar fields in config files.

Grammar::

    expr   := term (("+" | "-") term)*
    term   := factor (("*" | "/") factor)*
    factor := "-" factor | power
    power  := atom ("^" factor)?
    atom   := number | ident | ident "(" expr ("," expr)* ")" | "(" expr ")"

Identifiers are state variables ``x<k>``, action features ``a<k>`` and the
function names in ``UNARY_FUNCS`` / ``BINARY_FUNCS``.  Evaluation works on
Python floats or on numpy arrays (elementwise), which is how the grid and
the simulator evaluate fields at many points at once.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np


class ExprError(ValueError):
    pass


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UnknownIdentifier(ExprError):
    def __init__(self, name: str, offset: int | None = None):
        where = "" if offset is None else f" at offset {offset}"
        super().__init__(f"unknown identifier {name!r}{where}")
        self.name = name
        self.offset = offset


class DomainError(ExprError, ArithmeticError):
    pass


class UnboundVariable(ExprError, KeyError):
    def __init__(self, name: str):
        ExprError.__init__(self, f"variable {name!r} is not bound")
        self.name = name

    def __str__(self) -> str:
        return self.args[0]


UNARY_FUNCS = ("exp", "log", "sqrt", "abs", "tanh", "sin", "cos")
BINARY_FUNCS = ("min", "max")


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    kind: str  # "x" or "a"
    index: int

    @property
    def name(self) -> str:
        return f"{self.kind}{self.index}"


@dataclass(frozen=True)
class Unary:
    op: str  # "neg" or a name from UNARY_FUNCS
    arg: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str  # one of + - * / ^ min max
    left: "Expr"
    right: "Expr"


Expr = Union[Num, Var, Unary, Binary]

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)
_VAR_RE = re.compile(r"([xa])(0|[1-9]\d*)")


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    # offsets are byte offsets into the UTF-8 encoding
    tokens = []
    pos = 0
    byte_pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", byte_pos)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(), byte_pos))
        byte_pos += len(m.group().encode("utf-8"))
        pos = m.end()
    tokens.append(("end", "", byte_pos))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, text, off = self.peek()
        if text != value or kind == "end":
            found = "end of input" if kind == "end" else repr(text)
            raise ExprSyntaxError(f"expected {value!r}, found {found}", off)
        self.i += 1

    def parse(self) -> Expr:
        e = self.expr()
        kind, text, off = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected {text!r}", off)
        return e

    def expr(self) -> Expr:
        left = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            left = Binary(op, left, self.term())
        return left

    def term(self) -> Expr:
        left = self.factor()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            left = Binary(op, left, self.factor())
        return left

    def factor(self) -> Expr:
        if self.peek()[0] == "op" and self.peek()[1] == "-":
            self.take()
            return Unary("neg", self.factor())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            return Binary("^", base, self.factor())
        return base

    def atom(self) -> Expr:
        kind, text, off = self.take()
        if kind == "num":
            return Num(float(text))
        if kind == "ident":
            if self.peek()[1] == "(" and self.peek()[0] == "op":
                return self.call(text, off)
            m = _VAR_RE.fullmatch(text)
            if m is None:
                raise UnknownIdentifier(text, off)
            return Var(m.group(1), int(m.group(2)))
        if kind == "op" and text == "(":
            e = self.expr()
            self.expect(")")
            return e
        if kind == "end":
            raise ExprSyntaxError("unexpected end of input", off)
        raise ExprSyntaxError(f"unexpected {text!r}", off)

    def call(self, name: str, off: int) -> Expr:
        if name not in UNARY_FUNCS and name not in BINARY_FUNCS:
            raise UnknownIdentifier(name, off)
        self.expect("(")
        args = [self.expr()]
        while self.peek()[1] == "," and self.peek()[0] == "op":
            self.take()
            args.append(self.expr())
        self.expect(")")
        want = 1 if name in UNARY_FUNCS else 2
        if len(args) != want:
            raise ExprSyntaxError(f"{name} takes {want} argument(s), got {len(args)}", off)
        if want == 1:
            return Unary(name, args[0])
        return Binary(name, args[0], args[1])


def parse(text: str, n_x: int | None = None, n_a: int | None = None) -> Expr:
    """Parse ``text`` into an AST.

    If ``n_x`` / ``n_a`` are given the expression is also validated against
    that many state variables / action features.
    """
    e = _Parser(text).parse()
    if n_x is not None or n_a is not None:
        validate(e, n_x, n_a)
    return e


def variables(e: Expr) -> set[Var]:
    if isinstance(e, Var):
        return {e}
    if isinstance(e, Unary):
        return variables(e.arg)
    if isinstance(e, Binary):
        return variables(e.left) | variables(e.right)
    return set()


def validate(e: Expr, n_x: int | None, n_a: int | None) -> None:
    """Raise UnknownIdentifier if ``e`` uses variables outside the declared ranges."""
    for v in sorted(variables(e), key=lambda v: (v.kind, v.index)):
        limit = n_x if v.kind == "x" else n_a
        if limit is not None and v.index >= limit:
            raise UnknownIdentifier(v.name)


def to_string(e: Expr) -> str:
    """Canonical, fully parenthesized form that re-parses to an equal AST."""
    if isinstance(e, Num):
        return repr(float(e.value))
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Unary):
        if e.op == "neg":
            return f"(-{to_string(e.arg)})"
        return f"{e.op}({to_string(e.arg)})"
    if e.op in BINARY_FUNCS:
        return f"{e.op}({to_string(e.left)}, {to_string(e.right)})"
    return f"({to_string(e.left)} {e.op} {to_string(e.right)})"


def _check(bad, what: str):
    if np.any(bad):
        raise DomainError(what)


def evaluate(e: Expr, env: Mapping[str, object]):
    """Evaluate ``e`` with variables bound by name in ``env``.

    Values may be floats or numpy arrays of a common shape.  Division by
    zero, log/sqrt of a negative number and non-real powers raise
    DomainError.  ``0^0`` is 1.
    """
    with np.errstate(all="ignore"):
        return _eval(e, env)


def _eval(e: Expr, env):
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        try:
            return env[e.name]
        except KeyError:
            raise UnboundVariable(e.name) from None
    if isinstance(e, Unary):
        v = _eval(e.arg, env)
        op = e.op
        if op == "neg":
            return -v
        if op == "log":
            _check(np.less(v, 0), "log of a negative number")
            return np.log(v)
        if op == "sqrt":
            _check(np.less(v, 0), "sqrt of a negative number")
            return np.sqrt(v)
        return _UNARY_IMPL[op](v)
    left = _eval(e.left, env)
    right = _eval(e.right, env)
    op = e.op
    if op == "+":
        return np.add(left, right)
    if op == "-":
        return np.subtract(left, right)
    if op == "*":
        return np.multiply(left, right)
    if op == "/":
        _check(np.equal(right, 0), "division by zero")
        return np.divide(left, right)
    if op == "^":
        _check(np.equal(left, 0) & np.less(right, 0), "division by zero")
        out = np.power(np.asarray(left, dtype=float), right)
        _check(np.isnan(out) & ~np.isnan(left) & ~np.isnan(right), "non-real power")
        return out
    if op == "min":
        return np.minimum(left, right)
    return np.maximum(left, right)


_UNARY_IMPL = {
    "exp": np.exp,
    "abs": np.abs,
    "tanh": np.tanh,
    "sin": np.sin,
    "cos": np.cos,
}


def env_for(x, features=None) -> dict:
    """Bind ``x<k>`` to the last-axis slices of ``x`` and ``a<k>`` to ``features``."""
    x = np.asarray(x, dtype=float)
    env = {f"x{k}": x[..., k] for k in range(x.shape[-1])}
    if features is not None:
        for k, f in enumerate(features):
            env[f"a{k}"] = float(f)
    return env


def evaluate_at(e: Expr, x, features=None):
    """Evaluate on points ``x`` of shape (..., d); always returns an array of shape x.shape[:-1]."""
    x = np.asarray(x, dtype=float)
    out = evaluate(e, env_for(x, features))
    return np.broadcast_to(np.asarray(out, dtype=float), x.shape[:-1]).copy()
