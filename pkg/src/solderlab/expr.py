"""Tiny analytic-expression language: parser, exact differentiation, evaluation.

Expressions are immutable trees (shared subtrees make them DAGs in practice).
Supported operations: + - * / unary minus, integer powers via ^, and the
functions sin, cos, exp, log, sqrt.  Differentiation is exact; the only
rewriting ever performed is constant folding (0*x -> 0, x+0 -> x, 1*x -> x and
literal arithmetic).  There is deliberately no general simplifier: what you
build is what gets evaluated.

Evaluation is strict about domains.  log of a non-positive value, sqrt of a
negative value and division by exact zero raise DomainEvalError instead of
returning NaN or infinities.
"""

from __future__ import annotations

import math
import re
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

__all__ = [
    "Expr",
    "ParseError",
    "DomainEvalError",
    "constant",
    "variable",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "powi",
    "sin",
    "cos",
    "exp",
    "log",
    "sqrt",
    "parse_expr",
    "differentiate",
    "evaluate",
    "evaluate_many",
    "substitute",
    "free_variables",
]

Number = Union[int, float]


class ParseError(ValueError):
    """Syntax or name error while parsing, with the offending position."""

    def __init__(self, message: str, text: str, position: int):
        self.text = text
        self.position = position
        pointer = text[:position] + " >>> " + text[position:]
        super().__init__(f"{message} at position {position}: {pointer!r}")


class DomainEvalError(ArithmeticError):
    """Evaluation left the domain of an operation (log, sqrt, division, exp)."""


def _wrap(x: "Expr | Number") -> "Expr":
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, float)):
        return constant(float(x))
    raise TypeError(f"cannot use {type(x).__name__} as an expression")


class Expr:
    __slots__ = ("_dcache",)

    def __init__(self):
        self._dcache: dict[str, Expr] = {}

    # arithmetic sugar so geometric code reads like the formulas
    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __truediv__(self, other):
        return div(self, _wrap(other))

    def __rtruediv__(self, other):
        return div(_wrap(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, k: int):
        return powi(self, k)

    def __str__(self) -> str:
        return to_string(self)

    def __repr__(self) -> str:
        return f"<Expr {to_string(self)}>"


class Const(Expr):
    __slots__ = ("value",)

    def __init__(self, value: float):
        super().__init__()
        self.value = float(value)


class Var(Expr):
    __slots__ = ("name",)

    def __init__(self, name: str):
        super().__init__()
        self.name = name


class _Unary(Expr):
    __slots__ = ("arg",)

    def __init__(self, arg: Expr):
        super().__init__()
        self.arg = arg


class Neg(_Unary):
    __slots__ = ()


class Sin(_Unary):
    __slots__ = ()


class Cos(_Unary):
    __slots__ = ()


class Exp(_Unary):
    __slots__ = ()


class Log(_Unary):
    __slots__ = ()


class Sqrt(_Unary):
    __slots__ = ()


class _Binary(Expr):
    __slots__ = ("left", "right")

    def __init__(self, left: Expr, right: Expr):
        super().__init__()
        self.left = left
        self.right = right


class Add(_Binary):
    __slots__ = ()


class Sub(_Binary):
    __slots__ = ()


class Mul(_Binary):
    __slots__ = ()


class Div(_Binary):
    __slots__ = ()


class Pow(Expr):
    __slots__ = ("base", "exponent")

    def __init__(self, base: Expr, exponent: int):
        super().__init__()
        self.base = base
        self.exponent = int(exponent)


_ZERO = None  # set after constant() is defined
_ONE = None


def constant(value: Number) -> Expr:
    return Const(float(value))


def variable(name: str) -> Expr:
    if not _IDENT_RE.fullmatch(name):
        raise ValueError(f"invalid variable name {name!r}")
    if name in _FUNCTIONS:
        raise ValueError(f"{name!r} is a reserved function name")
    return Var(name)


def _is_const(e: Expr, value: float | None = None) -> bool:
    if not isinstance(e, Const):
        return False
    return True if value is None else e.value == value


def add(a: Expr, b: Expr) -> Expr:
    if _is_const(a) and _is_const(b):
        return Const(a.value + b.value)
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    return Add(a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if _is_const(a) and _is_const(b):
        return Const(a.value - b.value)
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return Neg(b)
    return Sub(a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if _is_const(a) and _is_const(b):
        return Const(a.value * b.value)
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return Const(0.0)
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    return Mul(a, b)


def div(a: Expr, b: Expr) -> Expr:
    if _is_const(b) and b.value != 0.0 and _is_const(a):
        return Const(a.value / b.value)
    if _is_const(a, 0.0) and not _is_const(b, 0.0):
        return Const(0.0)
    if _is_const(b, 1.0):
        return a
    return Div(a, b)


def neg(a: Expr) -> Expr:
    if _is_const(a):
        return Const(-a.value)
    return Neg(a)


def powi(base: Expr, k: int) -> Expr:
    k = int(k)
    if k == 0:
        return Const(1.0)
    if k == 1:
        return base
    if _is_const(base) and not (base.value == 0.0 and k < 0):
        return Const(base.value ** k)
    return Pow(base, k)


def sin(a: Expr) -> Expr:
    return Const(math.sin(a.value)) if _is_const(a) else Sin(a)


def cos(a: Expr) -> Expr:
    return Const(math.cos(a.value)) if _is_const(a) else Cos(a)


def exp(a: Expr) -> Expr:
    if _is_const(a):
        try:
            return Const(math.exp(a.value))
        except OverflowError:
            pass
    return Exp(a)


def log(a: Expr) -> Expr:
    if _is_const(a) and a.value > 0.0:
        return Const(math.log(a.value))
    return Log(a)


def sqrt(a: Expr) -> Expr:
    if _is_const(a) and a.value >= 0.0:
        return Const(math.sqrt(a.value))
    return Sqrt(a)


# ---------------------------------------------------------------------------
# differentiation

def differentiate(e: Expr, var: str) -> Expr:
    """Exact partial derivative with respect to the named variable."""
    cached = e._dcache.get(var)
    if cached is not None:
        return cached
    d = _diff(e, var)
    e._dcache[var] = d
    return d


def _diff(e: Expr, v: str) -> Expr:
    if isinstance(e, Const):
        return Const(0.0)
    if isinstance(e, Var):
        return Const(1.0) if e.name == v else Const(0.0)
    if isinstance(e, Neg):
        return neg(differentiate(e.arg, v))
    if isinstance(e, Add):
        return add(differentiate(e.left, v), differentiate(e.right, v))
    if isinstance(e, Sub):
        return sub(differentiate(e.left, v), differentiate(e.right, v))
    if isinstance(e, Mul):
        return add(
            mul(differentiate(e.left, v), e.right),
            mul(e.left, differentiate(e.right, v)),
        )
    if isinstance(e, Div):
        num = sub(
            mul(differentiate(e.left, v), e.right),
            mul(e.left, differentiate(e.right, v)),
        )
        return div(num, powi(e.right, 2))
    if isinstance(e, Pow):
        inner = differentiate(e.base, v)
        return mul(mul(constant(e.exponent), powi(e.base, e.exponent - 1)), inner)
    if isinstance(e, Sin):
        return mul(cos(e.arg), differentiate(e.arg, v))
    if isinstance(e, Cos):
        return neg(mul(sin(e.arg), differentiate(e.arg, v)))
    if isinstance(e, Exp):
        return mul(exp(e.arg), differentiate(e.arg, v))
    if isinstance(e, Log):
        return div(differentiate(e.arg, v), e.arg)
    if isinstance(e, Sqrt):
        return div(differentiate(e.arg, v), mul(constant(2.0), sqrt(e.arg)))
    raise TypeError(f"unknown node {type(e).__name__}")


# ---------------------------------------------------------------------------
# evaluation

def evaluate(e: Expr, point: Mapping[str, float]) -> float:
    """Evaluate at a coordinate assignment.  Raises DomainEvalError rather
    than producing NaN or infinities."""
    return _eval(e, point, {})


def _eval(e: Expr, pt: Mapping[str, float], memo: dict) -> float:
    key = id(e)
    hit = memo.get(key)
    if hit is not None:
        return hit
    if isinstance(e, Const):
        r = e.value
    elif isinstance(e, Var):
        try:
            r = float(pt[e.name])
        except KeyError:
            raise ValueError(f"variable {e.name!r} not assigned a value") from None
    elif isinstance(e, Neg):
        r = -_eval(e.arg, pt, memo)
    elif isinstance(e, Add):
        r = _eval(e.left, pt, memo) + _eval(e.right, pt, memo)
    elif isinstance(e, Sub):
        r = _eval(e.left, pt, memo) - _eval(e.right, pt, memo)
    elif isinstance(e, Mul):
        r = _eval(e.left, pt, memo) * _eval(e.right, pt, memo)
    elif isinstance(e, Div):
        den = _eval(e.right, pt, memo)
        if den == 0.0:
            raise DomainEvalError(f"division by zero in {_clip(e)}")
        r = _eval(e.left, pt, memo) / den
    elif isinstance(e, Pow):
        b = _eval(e.base, pt, memo)
        if b == 0.0 and e.exponent < 0:
            raise DomainEvalError(f"zero base with negative exponent in {_clip(e)}")
        r = b ** e.exponent
    elif isinstance(e, Sin):
        r = math.sin(_eval(e.arg, pt, memo))
    elif isinstance(e, Cos):
        r = math.cos(_eval(e.arg, pt, memo))
    elif isinstance(e, Exp):
        try:
            r = math.exp(_eval(e.arg, pt, memo))
        except OverflowError:
            raise DomainEvalError(f"exp overflow in {_clip(e)}") from None
    elif isinstance(e, Log):
        a = _eval(e.arg, pt, memo)
        if a <= 0.0:
            raise DomainEvalError(f"log of non-positive value {a} in {_clip(e)}")
        r = math.log(a)
    elif isinstance(e, Sqrt):
        a = _eval(e.arg, pt, memo)
        if a < 0.0:
            raise DomainEvalError(f"sqrt of negative value {a} in {_clip(e)}")
        r = math.sqrt(a)
    else:
        raise TypeError(f"unknown node {type(e).__name__}")
    memo[key] = r
    return r


def evaluate_many(e: Expr, arrays: Mapping[str, np.ndarray]) -> np.ndarray:
    """Vectorised evaluation over numpy coordinate arrays (same domain rules)."""
    shape = np.broadcast_shapes(*(np.shape(a) for a in arrays.values())) if arrays else ()
    out = _eval_many(e, arrays, {})
    return np.broadcast_to(np.asarray(out, dtype=float), shape).copy()


def _eval_many(e: Expr, arrs: Mapping[str, np.ndarray], memo: dict):
    key = id(e)
    if key in memo:
        return memo[key]
    if isinstance(e, Const):
        r = np.float64(e.value)
    elif isinstance(e, Var):
        try:
            r = np.asarray(arrs[e.name], dtype=float)
        except KeyError:
            raise ValueError(f"variable {e.name!r} not assigned a value") from None
    elif isinstance(e, Neg):
        r = -_eval_many(e.arg, arrs, memo)
    elif isinstance(e, Add):
        r = _eval_many(e.left, arrs, memo) + _eval_many(e.right, arrs, memo)
    elif isinstance(e, Sub):
        r = _eval_many(e.left, arrs, memo) - _eval_many(e.right, arrs, memo)
    elif isinstance(e, Mul):
        r = _eval_many(e.left, arrs, memo) * _eval_many(e.right, arrs, memo)
    elif isinstance(e, Div):
        den = _eval_many(e.right, arrs, memo)
        if np.any(den == 0.0):
            raise DomainEvalError(f"division by zero in {_clip(e)}")
        r = _eval_many(e.left, arrs, memo) / den
    elif isinstance(e, Pow):
        b = _eval_many(e.base, arrs, memo)
        if e.exponent < 0 and np.any(b == 0.0):
            raise DomainEvalError(f"zero base with negative exponent in {_clip(e)}")
        r = b ** float(e.exponent) if e.exponent >= 0 else b ** e.exponent
    elif isinstance(e, Sin):
        r = np.sin(_eval_many(e.arg, arrs, memo))
    elif isinstance(e, Cos):
        r = np.cos(_eval_many(e.arg, arrs, memo))
    elif isinstance(e, Exp):
        a = _eval_many(e.arg, arrs, memo)
        with np.errstate(over="raise"):
            try:
                r = np.exp(a)
            except FloatingPointError:
                raise DomainEvalError(f"exp overflow in {_clip(e)}") from None
    elif isinstance(e, Log):
        a = _eval_many(e.arg, arrs, memo)
        if np.any(a <= 0.0):
            raise DomainEvalError(f"log of non-positive value in {_clip(e)}")
        r = np.log(a)
    elif isinstance(e, Sqrt):
        a = _eval_many(e.arg, arrs, memo)
        if np.any(a < 0.0):
            raise DomainEvalError(f"sqrt of negative value in {_clip(e)}")
        r = np.sqrt(a)
    else:
        raise TypeError(f"unknown node {type(e).__name__}")
    memo[key] = r
    return r


def substitute(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace variables by expressions (used by pullbacks and restrictions)."""
    return _subst(e, mapping, {})


def _subst(e: Expr, m: Mapping[str, Expr], memo: dict) -> Expr:
    key = id(e)
    if key in memo:
        return memo[key]
    if isinstance(e, Const):
        r = e
    elif isinstance(e, Var):
        r = m.get(e.name, e)
    elif isinstance(e, Neg):
        r = neg(_subst(e.arg, m, memo))
    elif isinstance(e, Sin):
        r = sin(_subst(e.arg, m, memo))
    elif isinstance(e, Cos):
        r = cos(_subst(e.arg, m, memo))
    elif isinstance(e, Exp):
        r = exp(_subst(e.arg, m, memo))
    elif isinstance(e, Log):
        r = log(_subst(e.arg, m, memo))
    elif isinstance(e, Sqrt):
        r = sqrt(_subst(e.arg, m, memo))
    elif isinstance(e, Add):
        r = add(_subst(e.left, m, memo), _subst(e.right, m, memo))
    elif isinstance(e, Sub):
        r = sub(_subst(e.left, m, memo), _subst(e.right, m, memo))
    elif isinstance(e, Mul):
        r = mul(_subst(e.left, m, memo), _subst(e.right, m, memo))
    elif isinstance(e, Div):
        r = div(_subst(e.left, m, memo), _subst(e.right, m, memo))
    elif isinstance(e, Pow):
        r = powi(_subst(e.base, m, memo), e.exponent)
    else:
        raise TypeError(f"unknown node {type(e).__name__}")
    memo[key] = r
    return r


def free_variables(e: Expr) -> set[str]:
    seen: set[int] = set()
    names: set[str] = set()
    stack = [e]
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        if isinstance(node, Var):
            names.add(node.name)
        elif isinstance(node, _Unary):
            stack.append(node.arg)
        elif isinstance(node, _Binary):
            stack.append(node.left)
            stack.append(node.right)
        elif isinstance(node, Pow):
            stack.append(node.base)
    return names


# ---------------------------------------------------------------------------
# printing

_PREC_ADD = 1
_PREC_MUL = 2
_PREC_NEG = 3
_PREC_POW = 4


def to_string(e: Expr) -> str:
    return _render(e, 0)


def _render(e: Expr, min_prec: int) -> str:
    if isinstance(e, Const):
        s = repr(e.value)
        return f"({s})" if e.value < 0 and min_prec > _PREC_ADD else s
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Add):
        s = f"{_render(e.left, _PREC_ADD)} + {_render(e.right, _PREC_ADD + 1)}"
        return f"({s})" if min_prec > _PREC_ADD else s
    if isinstance(e, Sub):
        s = f"{_render(e.left, _PREC_ADD)} - {_render(e.right, _PREC_ADD + 1)}"
        return f"({s})" if min_prec > _PREC_ADD else s
    if isinstance(e, Mul):
        s = f"{_render(e.left, _PREC_MUL)}*{_render(e.right, _PREC_MUL + 1)}"
        return f"({s})" if min_prec > _PREC_MUL else s
    if isinstance(e, Div):
        s = f"{_render(e.left, _PREC_MUL)}/{_render(e.right, _PREC_MUL + 1)}"
        return f"({s})" if min_prec > _PREC_MUL else s
    if isinstance(e, Neg):
        s = f"-{_render(e.arg, _PREC_NEG + 1)}"
        return f"({s})" if min_prec > _PREC_NEG else s
    if isinstance(e, Pow):
        k = e.exponent
        ks = str(k) if k >= 0 else f"({k})"
        s = f"{_render(e.base, _PREC_POW + 1)}^{ks}"
        return f"({s})" if min_prec > _PREC_POW else s
    for cls, name in ((Sin, "sin"), (Cos, "cos"), (Exp, "exp"), (Log, "log"), (Sqrt, "sqrt")):
        if isinstance(e, cls):
            return f"{name}({_render(e.arg, 0)})"
    raise TypeError(f"unknown node {type(e).__name__}")


def _clip(e: Expr, limit: int = 80) -> str:
    s = to_string(e)
    return s if len(s) <= limit else s[: limit - 3] + "..."


# ---------------------------------------------------------------------------
# parsing

_IDENT_RE = re.compile(r"[a-zA-Z_][a-zA-Z0-9_]*")
_NUMBER_RE = re.compile(r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")
_INT_RE = re.compile(r"\d+")
_FUNCTIONS = {"sin": sin, "cos": cos, "exp": exp, "log": log, "sqrt": sqrt}


class _Parser:
    def __init__(self, text: str, variables: Iterable[str]):
        self.text = text
        self.vars = set(variables)
        self.pos = 0

    def error(self, message: str, pos: int | None = None):
        raise ParseError(message, self.text, self.pos if pos is None else pos)

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self) -> str:
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, ch: str):
        if self.peek() != ch:
            self.error(f"expected {ch!r}")
        self.pos += 1

    def parse(self) -> Expr:
        e = self.expr()
        self.skip_ws()
        if self.pos != len(self.text):
            self.error("unexpected trailing input")
        return e

    def expr(self) -> Expr:
        e = self.term()
        while True:
            c = self.peek()
            if c == "+":
                self.pos += 1
                e = add(e, self.term())
            elif c == "-":
                self.pos += 1
                e = sub(e, self.term())
            else:
                return e

    def term(self) -> Expr:
        e = self.factor()
        while True:
            c = self.peek()
            if c == "*":
                self.pos += 1
                e = mul(e, self.factor())
            elif c == "/":
                self.pos += 1
                e = div(e, self.factor())
            else:
                return e

    def factor(self) -> Expr:
        if self.peek() == "-":
            self.pos += 1
            return neg(self.factor())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.peek() == "^":
            self.pos += 1
            return powi(base, self.exponent())
        return base

    def exponent(self) -> int:
        self.skip_ws()
        if self.peek() == "(":
            self.pos += 1
            k = self.exponent_body()
            self.expect(")")
            return k
        return self.exponent_body()

    def exponent_body(self) -> int:
        self.skip_ws()
        sign = 1
        if self.peek() == "-":
            self.pos += 1
            sign = -1
            self.skip_ws()
        m = _INT_RE.match(self.text, self.pos)
        if not m:
            self.error("exponent must be an integer literal")
        # reject 2.5 or 1e3 style exponents outright
        end = m.end()
        if end < len(self.text) and self.text[end] in ".eE" and _NUMBER_RE.match(self.text, self.pos).end() > end:
            self.error("exponent must be an integer literal")
        self.pos = end
        return sign * int(m.group())

    def atom(self) -> Expr:
        self.skip_ws()
        if self.pos >= len(self.text):
            self.error("unexpected end of input")
        c = self.text[self.pos]
        if c == "(":
            self.pos += 1
            e = self.expr()
            self.expect(")")
            return e
        m = _NUMBER_RE.match(self.text, self.pos)
        if m:
            self.pos = m.end()
            return constant(float(m.group()))
        m = _IDENT_RE.match(self.text, self.pos)
        if m:
            name = m.group()
            start = self.pos
            self.pos = m.end()
            if name in _FUNCTIONS:
                if self.peek() != "(":
                    self.error(f"function {name!r} must be called", start)
                self.pos += 1
                arg = self.expr()
                self.expect(")")
                return _FUNCTIONS[name](arg)
            if name not in self.vars:
                self.error(f"unknown identifier {name!r}", start)
            return Var(name)
        self.error(f"unexpected character {c!r}")


def parse_expr(text: str, variables: Sequence[str]) -> Expr:
    """Parse an expression over the given variable names.

    Grammar (EBNF):
        expr     = term {("+" | "-") term} ;
        term     = factor {("*" | "/") factor} ;
        factor   = "-" factor | power ;
        power    = atom ["^" exponent] ;
        exponent = ["-"] integer | "(" ["-"] integer ")" ;
        atom     = number | ident | func "(" expr ")" | "(" expr ")" ;
        func     = "sin" | "cos" | "exp" | "log" | "sqrt" ;

    Numbers are decimal or scientific reals; identifiers are
    [a-zA-Z_][a-zA-Z0-9_]*.  Exponents must be integer literals.
    """
    return _Parser(text, variables).parse()
