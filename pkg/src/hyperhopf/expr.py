"""Arithmetic expression DSL with exact symbolic differentiation.

Grammar (whitespace-insensitive)::

    expr    := term (("+" | "-") term)*
    term    := unary (("*" | "/") unary)*
    unary   := ("-" | "+") unary | power
    power   := atom (("^" | "**") unary)?
    atom    := NUMBER | NAME | FUNC "(" expr ")" | "(" expr ")"
    FUNC    := sin | cos | exp | log | sqrt | abs

``^`` binds tightest, so ``-x^2`` is ``-(x^2)``.  Exponents must fold to a
constant integer; write fractional powers through ``exp``/``log``.

Trees are immutable.  ``differentiate`` never leaves the node set, so any
number of derivatives can be taken; only trivial constant folding is done.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Union

import numpy as np

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt", "abs")
DEFAULT_VARIABLE = re.compile(r"^(x|t|lambda|u[1-9][0-9]*)$")


class ExprError(Exception):
    """Base class for expression errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int, expected: Iterable[str] = ()):
        self.offset = offset
        self.expected = frozenset(expected)
        detail = f" (expected one of: {', '.join(sorted(self.expected))})" if self.expected else ""
        super().__init__(f"{message} at offset {offset}{detail}")


class UnknownIdentifierError(ExprError):
    def __init__(self, name: str, offset: int):
        self.name = name
        self.offset = offset
        super().__init__(f"unknown identifier {name!r} at offset {offset}")


class UnboundVariableError(ExprError):
    pass


class ExprDomainError(ExprError):
    pass


# --------------------------------------------------------------------- nodes


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str  # "neg" or a name from FUNCTIONS
    arg: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str  # one of + - * /
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Pow:
    base: "Expr"
    exponent: int


Expr = Union[Const, Var, Unary, Binary, Pow]

ZERO = Const(0.0)
ONE = Const(1.0)


def _is_const(e: Expr, value: float | None = None) -> bool:
    return isinstance(e, Const) and (value is None or e.value == value)


def add(a: Expr, b: Expr) -> Expr:
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    if _is_const(a) and _is_const(b):
        return Const(a.value + b.value)
    return Binary("+", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return neg(b)
    if _is_const(a) and _is_const(b):
        return Const(a.value - b.value)
    return Binary("-", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return ZERO
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    if _is_const(a) and _is_const(b):
        return Const(a.value * b.value)
    return Binary("*", a, b)


def div(a: Expr, b: Expr) -> Expr:
    if _is_const(a, 0.0) and not _is_const(b, 0.0):
        return ZERO
    if _is_const(b, 1.0):
        return a
    return Binary("/", a, b)


def neg(a: Expr) -> Expr:
    if _is_const(a):
        return Const(-a.value)
    if isinstance(a, Unary) and a.op == "neg":
        return a.arg
    return Unary("neg", a)


def power(a: Expr, k: int) -> Expr:
    if k == 0:
        return ONE
    if k == 1:
        return a
    if _is_const(a) and (a.value != 0.0 or k > 0):
        return Const(float(a.value) ** k)
    return Pow(a, k)


def func(name: str, a: Expr) -> Expr:
    return Unary(name, a)


# -------------------------------------------------------------------- parser

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>\*\*|[-+*/^(),]))"
)


@dataclass
class _Token:
    kind: str  # num, name, op, end
    text: str
    offset: int


def _tokenize(source: str) -> list[_Token]:
    tokens = []
    pos = 0
    while True:
        while pos < len(source) and source[pos].isspace():
            pos += 1
        if pos >= len(source):
            tokens.append(_Token("end", "", pos))
            return tokens
        m = _TOKEN.match(source, pos)
        if m is None or m.end() == pos:
            raise ExprSyntaxError(f"unexpected character {source[pos]!r}", pos)
        kind = m.lastgroup
        tokens.append(_Token(kind, m.group(kind), m.start(kind)))
        pos = m.end()


_OPERAND_START = ("number", "identifier", "(", "-", "+")


class _Parser:
    def __init__(self, source: str, accept: Callable[[str], bool]):
        self.tokens = _tokenize(source)
        self.i = 0
        self.accept = accept

    @property
    def tok(self) -> _Token:
        return self.tokens[self.i]

    def _is_op(self, *ops: str) -> bool:
        return self.tok.kind == "op" and self.tok.text in ops

    def parse(self) -> Expr:
        e = self.expr()
        if self.tok.kind != "end":
            raise ExprSyntaxError(
                f"unexpected token {self.tok.text!r}", self.tok.offset,
                ("+", "-", "*", "/", "^", "end of input"),
            )
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self._is_op("+", "-"):
            op = self.tok.text
            self.i += 1
            rhs = self.term()
            e = Binary(op, e, rhs)
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self._is_op("*", "/"):
            op = self.tok.text
            self.i += 1
            rhs = self.unary()
            e = Binary(op, e, rhs)
        return e

    def unary(self) -> Expr:
        if self._is_op("-"):
            self.i += 1
            return Unary("neg", self.unary())
        if self._is_op("+"):
            self.i += 1
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self._is_op("^", "**"):
            self.i += 1
            at = self.tok.offset
            exponent = self.unary()
            k = _constant_integer(exponent)
            if k is None:
                raise ExprSyntaxError("exponent must be a constant integer", at, ("integer",))
            return Pow(base, k)
        return base

    def atom(self) -> Expr:
        tok = self.tok
        if tok.kind == "num":
            self.i += 1
            return Const(float(tok.text))
        if tok.kind == "name":
            self.i += 1
            if tok.text in FUNCTIONS:
                if not self._is_op("("):
                    raise ExprSyntaxError(f"function {tok.text} needs an argument", self.tok.offset, ("(",))
                self.i += 1
                arg = self.expr()
                self._expect(")")
                return Unary(tok.text, arg)
            if not self.accept(tok.text):
                raise UnknownIdentifierError(tok.text, tok.offset)
            return Var(tok.text)
        if self._is_op("("):
            self.i += 1
            e = self.expr()
            self._expect(")")
            return e
        raise ExprSyntaxError(
            "unexpected end of input" if tok.kind == "end" else f"unexpected token {tok.text!r}",
            tok.offset, _OPERAND_START,
        )

    def _expect(self, text: str) -> None:
        if not self._is_op(text):
            raise ExprSyntaxError(f"expected {text!r}", self.tok.offset, (text,))
        self.i += 1


def _constant_integer(e: Expr) -> int | None:
    if free_variables(e):
        return None
    try:
        value = evaluate(e, {})
    except ExprError:
        return None
    if not math.isfinite(value) or value != int(value):
        return None
    return int(value)


def parse(source: str, variables: Iterable[str] | None = None) -> Expr:
    """Parse ``source`` into an expression tree.

    ``variables`` lists the admissible identifiers.  When omitted, ``x``,
    ``t``, ``lambda`` and ``u1``, ``u2``, ... are accepted.
    """
    if variables is None:
        accept = lambda name: DEFAULT_VARIABLE.match(name) is not None  # noqa: E731
    else:
        allowed = frozenset(variables)
        accept = allowed.__contains__
    return _Parser(source, accept).parse()


# ------------------------------------------------------------------ analysis


def free_variables(e: Expr) -> frozenset[str]:
    if isinstance(e, Var):
        return frozenset((e.name,))
    if isinstance(e, Const):
        return frozenset()
    if isinstance(e, Unary):
        return free_variables(e.arg)
    if isinstance(e, Pow):
        return free_variables(e.base)
    return free_variables(e.left) | free_variables(e.right)


def differentiate(e: Expr, var: str) -> Expr:
    """Exact derivative of ``e`` with respect to ``var``."""
    if isinstance(e, Const):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.name == var else ZERO
    if isinstance(e, Pow):
        db = differentiate(e.base, var)
        if _is_const(db, 0.0):
            return ZERO
        return mul(mul(Const(float(e.exponent)), power(e.base, e.exponent - 1)), db)
    if isinstance(e, Unary):
        da = differentiate(e.arg, var)
        if _is_const(da, 0.0):
            return ZERO
        a = e.arg
        if e.op == "neg":
            return neg(da)
        if e.op == "sin":
            return mul(func("cos", a), da)
        if e.op == "cos":
            return neg(mul(func("sin", a), da))
        if e.op == "exp":
            return mul(e, da)
        if e.op == "log":
            return div(da, a)
        if e.op == "sqrt":
            return div(da, mul(Const(2.0), e))
        if e.op == "abs":
            return mul(div(a, e), da)
        raise ValueError(f"unknown unary operator {e.op}")
    dl = differentiate(e.left, var)
    dr = differentiate(e.right, var)
    if e.op == "+":
        return add(dl, dr)
    if e.op == "-":
        return sub(dl, dr)
    if e.op == "*":
        return add(mul(dl, e.right), mul(e.left, dr))
    if e.op == "/":
        return div(sub(mul(dl, e.right), mul(e.left, dr)), power(e.right, 2))
    raise ValueError(f"unknown binary operator {e.op}")


def substitute(e: Expr, values: Mapping[str, float]) -> Expr:
    """Replace variables by constants, folding trivially."""
    if isinstance(e, Var):
        return Const(float(values[e.name])) if e.name in values else e
    if isinstance(e, Const):
        return e
    if isinstance(e, Pow):
        return power(substitute(e.base, values), e.exponent)
    if isinstance(e, Unary):
        a = substitute(e.arg, values)
        if e.op == "neg":
            return neg(a)
        return Unary(e.op, a)
    l, r = substitute(e.left, values), substitute(e.right, values)
    return {"+": add, "-": sub, "*": mul, "/": div}[e.op](l, r)


# ---------------------------------------------------------------- evaluation

_NP_FUNCS = {
    "sin": np.sin, "cos": np.cos, "exp": np.exp,
    "log": np.log, "sqrt": np.sqrt, "abs": np.abs,
}


def evaluate(e: Expr, bindings: Mapping[str, float | np.ndarray]):
    """Evaluate with domain checking.  Works on scalars and numpy arrays."""
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        try:
            return bindings[e.name]
        except KeyError:
            raise UnboundVariableError(f"variable {e.name!r} is not bound") from None
    if isinstance(e, Pow):
        base = evaluate(e.base, bindings)
        if e.exponent < 0 and np.any(np.asarray(base) == 0):
            raise ExprDomainError("division by zero in negative power")
        with np.errstate(over="ignore"):
            out = np.asarray(base, dtype=float) ** e.exponent
        return out if np.ndim(out) else float(out)
    if isinstance(e, Unary):
        a = evaluate(e.arg, bindings)
        if e.op == "neg":
            return -a
        if e.op == "log" and np.any(np.asarray(a) <= 0):
            raise ExprDomainError("log of non-positive value")
        if e.op == "sqrt" and np.any(np.asarray(a) < 0):
            raise ExprDomainError("sqrt of negative value")
        out = _NP_FUNCS[e.op](a)
        return out if np.ndim(out) else float(out)
    l = evaluate(e.left, bindings)
    r = evaluate(e.right, bindings)
    if e.op == "+":
        return l + r
    if e.op == "-":
        return l - r
    if e.op == "*":
        return l * r
    if np.any(np.asarray(r) == 0):
        raise ExprDomainError("division by zero")
    return l / r


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def to_source(e: Expr) -> str:
    """Pretty-print with the minimum parentheses needed to reparse identically."""
    return _fmt(e)[0]


def _fmt(e: Expr) -> tuple[str, int]:
    # returns (text, precedence); atoms are 5, power 4, unary minus 3
    if isinstance(e, Const):
        text = repr(float(e.value))
        if e.value < 0 or text.startswith("-"):
            return f"({text})", 5
        return text, 5
    if isinstance(e, Var):
        return e.name, 5
    if isinstance(e, Pow):
        base, p = _fmt(e.base)
        if p < 5:
            base = f"({base})"
        exp = str(e.exponent) if e.exponent >= 0 else f"({e.exponent})"
        return f"{base}^{exp}", 4
    if isinstance(e, Unary):
        arg, p = _fmt(e.arg)
        if e.op == "neg":
            # -(x^2) prints as -x^2 since ^ binds tighter than unary minus
            return (f"-{arg}" if p >= 3 else f"-({arg})"), 3
        return f"{e.op}({arg})", 5
    prec = _PREC[e.op]
    left, lp = _fmt(e.left)
    right, rp = _fmt(e.right)
    if lp < prec:
        left = f"({left})"
    if rp <= prec:
        right = f"({right})"
    return f"{left} {e.op} {right}", prec


def _pycode(e: Expr, names: Mapping[str, str]) -> str:
    if isinstance(e, Const):
        return repr(float(e.value))
    if isinstance(e, Var):
        return names[e.name]
    if isinstance(e, Pow):
        return f"({_pycode(e.base, names)})**{e.exponent}"
    if isinstance(e, Unary):
        if e.op == "neg":
            return f"(-({_pycode(e.arg, names)}))"
        return f"_np.{'absolute' if e.op == 'abs' else e.op}({_pycode(e.arg, names)})"
    return f"({_pycode(e.left, names)} {e.op} {_pycode(e.right, names)})"


def compile_expr(e: Expr, argnames: Iterable[str], constants: Mapping[str, float] | None = None) -> Callable:
    """Compile to a fast numpy function of the positional ``argnames``.

    No domain checking: non-finite values propagate.  Names in ``constants``
    are baked in.  The result always broadcasts to the shape of the inputs.
    """
    argnames = list(argnames)
    if constants:
        e = substitute(e, {k: v for k, v in constants.items() if k not in argnames})
    missing = free_variables(e) - set(argnames)
    if missing:
        raise UnboundVariableError(f"unbound variables {sorted(missing)}")
    names = {a: f"_a{i}" for i, a in enumerate(argnames)}
    params = ", ".join(names[a] for a in argnames)
    body = _pycode(e, names)
    # broadcast so that constant expressions still return arrays
    zero = " + ".join(f"0.0*{names[a]}" for a in argnames) or "0.0"
    src = f"def _f({params}):\n    return {body} + ({zero})\n"
    scope = {"_np": np}
    exec(src, scope)  # noqa: S102 - source is generated from a validated tree
    return scope["_f"]
