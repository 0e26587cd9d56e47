"""Prediction-function expressions: parsing, vectorized evaluation, symbolic
differentiation and polynomial expansion.

Formulas use the variables ``x1 .. xd`` (1-indexed), the binary operators
``+ - * /``, integer powers ``^`` and the functions ``exp, log, sin, cos``.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np

__all__ = [
    "Expr", "Const", "Var", "Unary", "Binary", "Pow",
    "ExprError", "ParseError", "DomainError", "NotPolynomialError",
    "PolyCoeffs", "parse", "evaluate", "diff", "expand_polynomial",
]

UNARY_OPS = ("neg", "exp", "log", "sin", "cos")
BINARY_OPS = ("add", "sub", "mul", "div")
FUNCTIONS = ("exp", "log", "sin", "cos")


class ExprError(ValueError):
    pass


class ParseError(ExprError):
    def __init__(self, message: str, position: int | None = None):
        self.position = position
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)


class DomainError(ExprError, ArithmeticError):
    pass


class NotPolynomialError(ExprError):
    pass


class Expr:
    """Base class of the immutable expression tree."""

    def variables(self) -> frozenset[int]:
        return frozenset(self._variables())

    def _variables(self) -> Iterator[int]:
        for child in self.children():
            yield from child._variables()

    def children(self) -> tuple[Expr, ...]:
        return ()

    def __call__(self, X) -> np.ndarray:
        return evaluate(self, X)

    def __str__(self) -> str:
        return to_text(self)

    # operator sugar, mostly for tests and battery construction
    def __add__(self, other):
        return Binary("add", self, _lift(other))

    def __radd__(self, other):
        return Binary("add", _lift(other), self)

    def __sub__(self, other):
        return Binary("sub", self, _lift(other))

    def __rsub__(self, other):
        return Binary("sub", _lift(other), self)

    def __mul__(self, other):
        return Binary("mul", self, _lift(other))

    def __rmul__(self, other):
        return Binary("mul", _lift(other), self)

    def __neg__(self):
        return Unary("neg", self)


def _lift(value) -> Expr:
    if isinstance(value, Expr):
        return value
    return Const(float(value))


@dataclass(frozen=True, eq=True)
class Const(Expr):
    value: float


@dataclass(frozen=True, eq=True)
class Var(Expr):
    index: int  # 1-based

    def _variables(self):
        yield self.index


@dataclass(frozen=True, eq=True)
class Unary(Expr):
    op: str
    arg: Expr

    def __post_init__(self):
        if self.op not in UNARY_OPS:
            raise ExprError(f"unknown unary op {self.op!r}")

    def children(self):
        return (self.arg,)


@dataclass(frozen=True, eq=True)
class Binary(Expr):
    op: str
    left: Expr
    right: Expr

    def __post_init__(self):
        if self.op not in BINARY_OPS:
            raise ExprError(f"unknown binary op {self.op!r}")

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True, eq=True)
class Pow(Expr):
    base: Expr
    exponent: int

    def __post_init__(self):
        if not isinstance(self.exponent, int) or isinstance(self.exponent, bool):
            raise ExprError("pow exponent must be an integer")

    def children(self):
        return (self.base,)


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<var>x(?P<idx>\d+))"
    r"|(?P<name>[A-Za-z_]+)"
    r"|(?P<op>[-+*/^()]))"
)


@dataclass
class _Token:
    kind: str
    text: str
    pos: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ParseError(f"unexpected character {text[pos]!r}", pos)
        start = m.start(m.lastgroup) if m.lastgroup else pos
        if m.group("num") is not None:
            tokens.append(_Token("num", m.group("num"), start))
        elif m.group("var") is not None:
            tokens.append(_Token("var", m.group("idx"), m.start("var")))
        elif m.group("name") is not None:
            tokens.append(_Token("name", m.group("name"), m.start("name")))
        else:
            tokens.append(_Token("op", m.group("op"), m.start("op")))
        pos = m.end()
    tokens.append(_Token("end", "", len(text)))
    return tokens


@dataclass
class _Parser:
    tokens: list[_Token]
    d: int
    i: int = field(default=0)

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def take(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op: str) -> None:
        tok = self.take()
        if tok.kind != "op" or tok.text != op:
            found = tok.text or "end of input"
            raise ParseError(f"expected {op!r}, found {found!r}", tok.pos)

    def expr(self) -> Expr:
        node = self.term()
        while self.peek().kind == "op" and self.peek().text in "+-":
            op = "add" if self.take().text == "+" else "sub"
            node = Binary(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.factor()
        while self.peek().kind == "op" and self.peek().text in "*/":
            op = "mul" if self.take().text == "*" else "div"
            node = Binary(op, node, self.factor())
        return node

    def factor(self) -> Expr:
        node = self.base()
        tok = self.peek()
        if tok.kind == "op" and tok.text == "^":
            self.take()
            sign = 1
            if self.peek().kind == "op" and self.peek().text == "-":
                self.take()
                sign = -1
            exp_tok = self.take()
            if exp_tok.kind != "num":
                raise ParseError("expected integer exponent", exp_tok.pos)
            if not exp_tok.text.isdigit():
                raise ParseError(
                    f"non-integer exponent {exp_tok.text!r} in pow", exp_tok.pos)
            node = Pow(node, sign * int(exp_tok.text))
        return node

    def base(self) -> Expr:
        tok = self.take()
        if tok.kind == "num":
            return Const(float(tok.text))
        if tok.kind == "var":
            index = int(tok.text)
            if not 1 <= index <= self.d:
                raise ParseError(
                    f"variable index x{index} out of range 1..{self.d}", tok.pos)
            return Var(index)
        if tok.kind == "name":
            if tok.text not in FUNCTIONS:
                raise ParseError(f"unknown function {tok.text!r}", tok.pos)
            self.expect_op("(")
            arg = self.expr()
            self.expect_op(")")
            return Unary(tok.text, arg)
        if tok.kind == "op" and tok.text == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        if tok.kind == "op" and tok.text == "-":
            return Unary("neg", self.base())
        found = tok.text or "end of input"
        raise ParseError(f"unexpected {found!r}", tok.pos)


def parse(text: str, d: int) -> Expr:
    """Parse a formula over ``x1 .. xd``.

    Raises
    ------
    ParseError
        On malformed input, a variable index outside ``1..d`` or a
        non-integer exponent. The message carries the character position.
    """
    if d < 1:
        raise ValueError("dimension d must be >= 1")
    parser = _Parser(_tokenize(text), d)
    node = parser.expr()
    tok = parser.peek()
    if tok.kind != "end":
        raise ParseError(f"unexpected trailing {tok.text!r}", tok.pos)
    return node


# ---------------------------------------------------------------------------
# Printing
# ---------------------------------------------------------------------------

_PREC = {"add": 1, "sub": 1, "mul": 2, "div": 2}


def _fmt_number(value: float) -> str:
    if value == int(value) and abs(value) < 1e15:
        text = str(int(value))
    else:
        text = repr(float(value))
    return text


def _base_text(e: Expr) -> str:
    """Render ``e`` so it can stand as a grammar ``base``."""
    if isinstance(e, Var):
        return f"x{e.index}"
    if isinstance(e, Const) and e.value >= 0 and math.isfinite(e.value):
        return _fmt_number(e.value)
    if isinstance(e, Unary) and e.op != "neg":
        return f"{e.op}({to_text(e.arg)})"
    return f"({to_text(e)})"


def to_text(e: Expr) -> str:
    """Serialize to the formula grammar; ``parse(to_text(e))`` evaluates
    identically to ``e``."""
    if isinstance(e, Const):
        if e.value < 0:
            return f"-{_fmt_number(-e.value)}"
        return _fmt_number(e.value)
    if isinstance(e, Var):
        return f"x{e.index}"
    if isinstance(e, Unary):
        if e.op == "neg":
            return f"-{_base_text(e.arg)}"
        return f"{e.op}({to_text(e.arg)})"
    if isinstance(e, Pow):
        return f"{_base_text(e.base)}^{e.exponent}"
    if isinstance(e, Binary):
        prec = _PREC[e.op]
        left = to_text(e.left)
        if isinstance(e.left, Binary) and _PREC[e.left.op] < prec:
            left = f"({left})"
        right = to_text(e.right)
        # right operand parenthesized at equal precedence: a-(b-c), a/(b*c)
        if isinstance(e.right, Binary) and _PREC[e.right.op] <= prec:
            right = f"({right})"
        elif isinstance(e.right, (Unary, Const)) and right.startswith("-"):
            right = f"({right})"
        sym = {"add": "+", "sub": "-", "mul": "*", "div": "/"}[e.op]
        return f"{left}{sym}{right}"
    raise ExprError(f"cannot print {e!r}")


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def evaluate(e: Expr, X) -> np.ndarray | float:
    """Evaluate ``e`` at one point (shape ``(d,)``) or rows of ``X`` (``(m, d)``).

    Domain violations (log of a non-positive value, division by zero,
    non-finite results) raise :class:`DomainError` instead of yielding NaN.
    """
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X2 = X.reshape(1, -1) if single else X
    out = _eval(e, X2)
    out = np.broadcast_to(out, (X2.shape[0],)).astype(float, copy=True)
    if not np.all(np.isfinite(out)):
        bad = int(np.flatnonzero(~np.isfinite(out))[0])
        raise DomainError(f"non-finite value of {to_text(e)} at {X2[bad].tolist()}")
    return float(out[0]) if single else out


def _domain_fail(msg: str, X: np.ndarray, mask: np.ndarray):
    idx = np.flatnonzero(np.broadcast_to(mask, (X.shape[0],)))[0]
    raise DomainError(f"{msg} at point {X[idx].tolist()}")


def _eval(e: Expr, X: np.ndarray):
    if isinstance(e, Const):
        return np.full(X.shape[0], e.value)
    if isinstance(e, Var):
        if e.index > X.shape[1]:
            raise ExprError(f"x{e.index} evaluated on {X.shape[1]}-dimensional input")
        return X[:, e.index - 1]
    if isinstance(e, Unary):
        a = _eval(e.arg, X)
        if e.op == "neg":
            return -a
        if e.op == "exp":
            with np.errstate(over="ignore"):
                return np.exp(a)
        if e.op == "log":
            bad = a <= 0
            if np.any(bad):
                _domain_fail("log of non-positive value", X, bad)
            return np.log(a)
        if e.op == "sin":
            return np.sin(a)
        return np.cos(a)
    if isinstance(e, Pow):
        a = _eval(e.base, X)
        if e.exponent < 0:
            bad = a == 0
            if np.any(bad):
                _domain_fail("division by zero in negative power", X, bad)
            return 1.0 / a ** (-e.exponent)
        return a ** e.exponent
    if isinstance(e, Binary):
        a = _eval(e.left, X)
        b = _eval(e.right, X)
        if e.op == "add":
            return a + b
        if e.op == "sub":
            return a - b
        if e.op == "mul":
            return a * b
        bad = b == 0
        if np.any(bad):
            _domain_fail("division by zero", X, bad)
        return a / b
    raise ExprError(f"cannot evaluate {e!r}")


# ---------------------------------------------------------------------------
# Differentiation
# ---------------------------------------------------------------------------

ZERO = Const(0.0)
ONE = Const(1.0)


def _is_const(e: Expr, value: float | None = None) -> bool:
    return isinstance(e, Const) and (value is None or e.value == value)


def _add(a: Expr, b: Expr) -> Expr:
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    if _is_const(a) and _is_const(b):
        return Const(a.value + b.value)
    return Binary("add", a, b)


def _sub(a: Expr, b: Expr) -> Expr:
    if _is_const(b, 0.0):
        return a
    if _is_const(a) and _is_const(b):
        return Const(a.value - b.value)
    if _is_const(a, 0.0):
        return _neg(b)
    return Binary("sub", a, b)


def _neg(a: Expr) -> Expr:
    if _is_const(a):
        return Const(-a.value)
    if isinstance(a, Unary) and a.op == "neg":
        return a.arg
    return Unary("neg", a)


def _mul(a: Expr, b: Expr) -> Expr:
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return ZERO
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    if _is_const(a) and _is_const(b):
        return Const(a.value * b.value)
    return Binary("mul", a, b)


def _div(a: Expr, b: Expr) -> Expr:
    if _is_const(a, 0.0):
        return ZERO
    if _is_const(b, 1.0):
        return a
    return Binary("div", a, b)


def _pow(a: Expr, n: int) -> Expr:
    if n == 0:
        return ONE
    if n == 1:
        return a
    return Pow(a, n)


def diff(e: Expr, j: int) -> Expr:
    """Symbolic partial derivative with respect to ``x_j`` (1-based)."""
    if isinstance(e, Const):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.index == j else ZERO
    if j not in e.variables():
        return ZERO
    if isinstance(e, Unary):
        da = diff(e.arg, j)
        if e.op == "neg":
            return _neg(da)
        if e.op == "exp":
            return _mul(da, e)
        if e.op == "log":
            return _div(da, e.arg)
        if e.op == "sin":
            return _mul(da, Unary("cos", e.arg))
        return _neg(_mul(da, Unary("sin", e.arg)))
    if isinstance(e, Pow):
        n = e.exponent
        return _mul(_mul(Const(float(n)), _pow(e.base, n - 1)), diff(e.base, j))
    if isinstance(e, Binary):
        da, db = diff(e.left, j), diff(e.right, j)
        if e.op == "add":
            return _add(da, db)
        if e.op == "sub":
            return _sub(da, db)
        if e.op == "mul":
            return _add(_mul(da, e.right), _mul(e.left, db))
        # quotient rule
        num = _sub(_mul(da, e.right), _mul(e.left, db))
        return _div(num, _pow(e.right, 2))
    raise ExprError(f"cannot differentiate {e!r}")


def diff_many(e: Expr, indices: Sequence[int]) -> Expr:
    """Mixed partial derivative over distinct 1-based ``indices``."""
    for j in indices:
        e = diff(e, j)
    return e


# ---------------------------------------------------------------------------
# Polynomial expansion
# ---------------------------------------------------------------------------

Monomial = tuple[int, ...]


@dataclass(frozen=True)
class PolyCoeffs:
    """Coefficients of a polynomial in the basis ``prod_j (x_j - c_j)^r_j``.

    ``centers`` is all zeros for the plain monomial basis.
    """

    d: int
    coeffs: Mapping[Monomial, float]
    centers: tuple[float, ...]

    @property
    def degree(self) -> int:
        return max((sum(k) for k in self.coeffs), default=0)

    def evaluate(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        shifted = X - np.asarray(self.centers)
        out = np.zeros(X.shape[0])
        for powers, a in self.coeffs.items():
            out += a * np.prod(shifted ** np.asarray(powers), axis=1)
        return out

    def to_expr(self, keep=None) -> Expr:
        """Rebuild an expression, optionally only from monomials accepted by
        ``keep(powers)``."""
        node: Expr = ZERO
        for powers in sorted(self.coeffs):
            if keep is not None and not keep(powers):
                continue
            a = self.coeffs[powers]
            mono: Expr = Const(a)
            for j, r in enumerate(powers):
                if r == 0:
                    continue
                c = self.centers[j]
                factor = Var(j + 1) if c == 0 else Binary("sub", Var(j + 1), Const(c))
                mono = _mul(mono, _pow(factor, r))
            node = _add(node, mono)
        return node


def _poly_mul(p: dict, q: dict) -> dict:
    out: dict = {}
    for k1, a in p.items():
        for k2, b in q.items():
            k = tuple(x + y for x, y in zip(k1, k2))
            out[k] = out.get(k, 0.0) + a * b
    return out


def _poly_add(p: dict, q: dict, sign: float = 1.0) -> dict:
    out = dict(p)
    for k, b in q.items():
        out[k] = out.get(k, 0.0) + sign * b
    return out


def _expand(e: Expr, d: int, centers: Sequence[float]) -> dict:
    zero = (0,) * d
    if isinstance(e, Const):
        return {zero: e.value}
    if isinstance(e, Var):
        k = [0] * d
        k[e.index - 1] = 1
        # x_j = (x_j - c_j) + c_j
        out = {tuple(k): 1.0}
        if centers[e.index - 1] != 0:
            out[zero] = float(centers[e.index - 1])
        return out
    if isinstance(e, Unary):
        if e.op != "neg":
            raise NotPolynomialError(f"non-polynomial node {e.op}() in {to_text(e)}")
        return {k: -v for k, v in _expand(e.arg, d, centers).items()}
    if isinstance(e, Pow):
        if e.exponent < 0:
            raise NotPolynomialError(f"negative power in {to_text(e)}")
        base = _expand(e.base, d, centers)
        out = {zero: 1.0}
        for _ in range(e.exponent):
            out = _poly_mul(out, base)
        return out
    if isinstance(e, Binary):
        p = _expand(e.left, d, centers)
        q = _expand(e.right, d, centers)
        if e.op == "add":
            return _poly_add(p, q)
        if e.op == "sub":
            return _poly_add(p, q, -1.0)
        if e.op == "mul":
            return _poly_mul(p, q)
        nonconst = [k for k, v in q.items() if k != zero and v != 0]
        if nonconst or q.get(zero, 0.0) == 0:
            raise NotPolynomialError(f"division by a non-constant in {to_text(e)}")
        return {k: v / q[zero] for k, v in p.items()}
    raise NotPolynomialError(f"cannot expand {e!r}")


def expand_polynomial(e: Expr, d: int, centers: Sequence[float] | None = None) -> PolyCoeffs:
    """Expand ``e`` into monomial coefficients.

    Without ``centers`` the basis is ``prod x_j^r_j``; with centers ``mu`` it
    is ``prod (x_j - mu_j)^r_j``. Exactly-cancelled coefficients are dropped.
    """
    if centers is None:
        centers = (0.0,) * d
    centers = tuple(float(c) for c in centers)
    if len(centers) != d:
        raise ValueError("centers must have length d")
    raw = _expand(e, d, centers)
    coeffs = {k: v for k, v in raw.items() if v != 0.0}
    return PolyCoeffs(d, coeffs, centers)
