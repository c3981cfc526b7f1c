"""A small arithmetic expression language for graph functions.

Grammar (``^`` is right-associative, unary minus binds looser than ``^``)::

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := '-' factor | base ('^' factor)?
    base   := number | ident | ident '(' expr ')' | '(' expr ')'

Identifiers are the variables ``x1 .. xm`` and the functions ``exp``,
``ln``, ``sinh``, ``cosh``, ``tanh``, ``sech`` and ``sqrt``.  Implicit
multiplication is a syntax error.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from ..errors import ArityError, DomainError, ParseError, UnknownIdentifierError
from .taylor import Taylor2

FUNCTIONS = ("exp", "ln", "sinh", "cosh", "tanh", "sech", "sqrt")


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    index: int  # zero-based; printed as x{index+1}


@dataclass(frozen=True)
class Neg:
    arg: "Expression"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expression"
    right: "Expression"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expression"


Expression = Union[Num, Var, Neg, BinOp, Call]


# ---------------------------------------------------------------- tokenizer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<newline>\n)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    line: int
    column: int


def _tokenize(source):
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(source):
        match = _TOKEN_RE.match(source, pos)
        column = pos - line_start + 1
        if match is None:
            raise ParseError(f"unexpected character {source[pos]!r}", line, column)
        kind = match.lastgroup
        if kind == "newline":
            line += 1
            line_start = match.end()
        elif kind != "ws":
            tokens.append(_Token(kind, match.group(), line, column))
        pos = match.end()
    tokens.append(_Token("end", "", line, pos - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, source, m):
        self.tokens = _tokenize(source)
        self.pos = 0
        self.m = m

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, text):
        tok = self.peek()
        if tok.text != text:
            found = tok.text or "end of input"
            raise ParseError(f"expected {text!r}, found {found!r}", tok.line, tok.column)
        return self.advance()

    def parse(self):
        node = self.expr()
        tok = self.peek()
        if tok.kind != "end":
            raise ParseError(f"unexpected token {tok.text!r}", tok.line, tok.column)
        return node

    def expr(self):
        node = self.term()
        while self.peek().text in ("+", "-"):
            op = self.advance().text
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.factor()
        while self.peek().text in ("*", "/"):
            op = self.advance().text
            node = BinOp(op, node, self.factor())
        return node

    def factor(self):
        if self.peek().text == "-":
            self.advance()
            return Neg(self.factor())
        node = self.base()
        if self.peek().text == "^":
            self.advance()
            node = BinOp("^", node, self.factor())
        return node

    def base(self):
        tok = self.advance()
        if tok.kind == "number":
            return Num(float(tok.text))
        if tok.text == "(":
            node = self.expr()
            self.expect(")")
            return node
        if tok.kind == "ident":
            return self.identifier(tok)
        found = tok.text or "end of input"
        raise ParseError(f"unexpected token {found!r}", tok.line, tok.column)

    def identifier(self, tok):
        name = tok.text
        if name in FUNCTIONS:
            if self.peek().text != "(":
                raise ArityError(f"function {name!r} takes exactly one argument", tok.line, tok.column)
            self.advance()
            if self.peek().text == ")":
                raise ArityError(f"function {name!r} takes exactly one argument", tok.line, tok.column)
            arg = self.expr()
            if self.peek().text == ",":
                raise ArityError(f"function {name!r} takes exactly one argument", tok.line, tok.column)
            self.expect(")")
            return Call(name, arg)
        match = re.fullmatch(r"x([1-9]\d*)", name)
        if match is None or (self.m is not None and int(match.group(1)) > self.m):
            raise UnknownIdentifierError(f"unknown identifier {name!r}", tok.line, tok.column)
        if self.peek().text == "(":
            raise ArityError(f"variable {name!r} is not callable", tok.line, tok.column)
        return Var(int(match.group(1)) - 1)


def parse(source: str, m: int | None = None) -> Expression:
    """Parse one expression; ``m`` bounds the admissible variables."""
    return _Parser(source, m).parse()


def parse_system(source, m: int | None = None) -> list[Expression]:
    """Parse several expressions, one per non-blank line (or a list of strings)."""
    if isinstance(source, str):
        lines = source.split("\n")
        out = []
        for lineno, text in enumerate(lines, start=1):
            if text.strip():
                try:
                    out.append(parse(text, m))
                except ParseError as exc:
                    raise type(exc)(str(exc).rsplit(" (line", 1)[0], lineno, exc.column) from None
        return out
    return [parse(s, m) for s in source]


# ------------------------------------------------------------------ printer

_PREC_ADD, _PREC_MUL, _PREC_NEG, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4, 5


def _precedence(node):
    if isinstance(node, BinOp):
        return {"+": _PREC_ADD, "-": _PREC_ADD, "*": _PREC_MUL, "/": _PREC_MUL, "^": _PREC_POW}[node.op]
    if isinstance(node, Neg) or (isinstance(node, Num) and node.value < 0):
        return _PREC_NEG
    return _PREC_ATOM


def _format_number(v):
    if float(v).is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def to_string(node: Expression) -> str:
    """Canonical text with the minimum of parentheses; re-parses to the same tree."""
    if isinstance(node, Num):
        return _format_number(node.value)
    if isinstance(node, Var):
        return f"x{node.index + 1}"
    if isinstance(node, Call):
        return f"{node.func}({to_string(node.arg)})"
    if isinstance(node, Neg):
        inner = to_string(node.arg)
        if _precedence(node.arg) < _PREC_NEG:
            inner = f"({inner})"
        return "-" + inner
    prec = _precedence(node)
    left, right = to_string(node.left), to_string(node.right)
    lp, rp = _precedence(node.left), _precedence(node.right)
    if node.op == "^":
        if lp <= _PREC_POW:
            left = f"({left})"
        if rp < _PREC_NEG:
            right = f"({right})"
        return f"{left}^{right}"
    if lp < prec:
        left = f"({left})"
    if rp <= prec:
        right = f"({right})"
    return f"{left} {node.op} {right}"


# -------------------------------------------------------- symbolic algebra


def free_vars(node) -> set[int]:
    if isinstance(node, Var):
        return {node.index}
    if isinstance(node, Num):
        return set()
    if isinstance(node, (Neg, Call)):
        return free_vars(node.arg)
    return free_vars(node.left) | free_vars(node.right)


def _is(node, value):
    return isinstance(node, Num) and node.value == value


def _neg(a):
    if isinstance(a, Num):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def _add(a, b):
    if _is(a, 0):
        return b
    if _is(b, 0):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value + b.value)
    return BinOp("+", a, b)


def _sub(a, b):
    if _is(b, 0):
        return a
    if _is(a, 0):
        return _neg(b)
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value - b.value)
    return BinOp("-", a, b)


def _mul(a, b):
    if _is(a, 0) or _is(b, 0):
        return Num(0.0)
    if _is(a, 1):
        return b
    if _is(b, 1):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value * b.value)
    return BinOp("*", a, b)


def _div(a, b):
    if _is(a, 0):
        return Num(0.0)
    if _is(b, 1):
        return a
    return BinOp("/", a, b)


def _pow(a, b):
    if _is(b, 1):
        return a
    if _is(b, 0):
        return Num(1.0)
    return BinOp("^", a, b)


def diff(node: Expression, k: int) -> Expression:
    """Exact derivative with respect to variable ``k`` (zero-based)."""
    if isinstance(node, Num):
        return Num(0.0)
    if isinstance(node, Var):
        return Num(1.0 if node.index == k else 0.0)
    if k not in free_vars(node):
        return Num(0.0)
    if isinstance(node, Neg):
        return _neg(diff(node.arg, k))
    if isinstance(node, Call):
        a = node.arg
        da = diff(a, k)
        f = node.func
        if f == "exp":
            outer = node
        elif f == "ln":
            return _div(da, a)
        elif f == "sinh":
            outer = Call("cosh", a)
        elif f == "cosh":
            outer = Call("sinh", a)
        elif f == "tanh":
            outer = BinOp("^", Call("sech", a), Num(2.0))
        elif f == "sech":
            outer = Neg(BinOp("*", node, Call("tanh", a)))
        elif f == "sqrt":
            return _div(da, _mul(Num(2.0), node))
        else:  # pragma: no cover - parser rejects other names
            raise ValueError(f)
        return _mul(outer, da)
    a, b = node.left, node.right
    da, db = diff(a, k), diff(b, k)
    if node.op == "+":
        return _add(da, db)
    if node.op == "-":
        return _sub(da, db)
    if node.op == "*":
        return _add(_mul(da, b), _mul(a, db))
    if node.op == "/":
        return _div(_sub(_mul(da, b), _mul(a, db)), _pow(b, Num(2.0)))
    # power
    if not free_vars(b):
        return _mul(_mul(b, _pow(a, _sub(b, Num(1.0)))), da)
    # d(a^b) = a^b (b' ln a + b a'/a)
    return _mul(node, _add(_mul(db, Call("ln", a)), _div(_mul(b, da), a)))


# --------------------------------------------------------------- evaluation


def _values(v):
    return v.value if isinstance(v, Taylor2) else np.asarray(v)


def _check_finite(result, node):
    if not np.all(np.isfinite(_values(result))):
        raise DomainError("non-finite result", to_string(node))
    if isinstance(result, Taylor2) and not (np.all(np.isfinite(result.grad)) and np.all(np.isfinite(result.hess))):
        raise DomainError("non-finite derivative", to_string(node))
    return result


def _apply(func, v):
    if isinstance(v, Taylor2):
        return getattr(v, "log" if func == "ln" else func)()
    if func == "ln":
        return np.log(v)
    if func == "sech":
        return 1.0 / np.cosh(v)
    return getattr(np, func)(v)


def _eval(node, env):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return env[node.index]
    if isinstance(node, Neg):
        return -_eval(node.arg, env)
    with np.errstate(all="ignore"):
        if isinstance(node, Call):
            v = _eval(node.arg, env)
            vals = _values(v)
            if node.func == "ln" and np.any(vals <= 0):
                raise DomainError("logarithm of a non-positive value", to_string(node))
            if node.func == "sqrt":
                if np.any(vals < 0):
                    raise DomainError("square root of a negative value", to_string(node))
                if isinstance(v, Taylor2) and np.any(vals == 0):
                    raise DomainError("square root not differentiable at zero", to_string(node))
            return _check_finite(_apply(node.func, v), node)
        a = _eval(node.left, env)
        if node.op == "^" and not free_vars(node.right):
            p = float(_eval(node.right, env))
            base = _values(a)
            if not p.is_integer() and np.any(base < 0):
                raise DomainError("non-integer power of a negative value", to_string(node))
            if p < 0 and np.any(base == 0):
                raise DomainError("division by zero", to_string(node))
            if isinstance(a, Taylor2):
                if not p.is_integer() and p < 2 and np.any(base == 0):
                    raise DomainError("power not twice differentiable at zero", to_string(node))
                return _check_finite(a**p, node)
            return _check_finite(np.power(np.asarray(a, dtype=float), p), node)
        b = _eval(node.right, env)
        if node.op == "+":
            result = a + b
        elif node.op == "-":
            result = a - b
        elif node.op == "*":
            result = a * b
        elif node.op == "/":
            if np.any(_values(b) == 0):
                raise DomainError("division by zero", to_string(node))
            result = a / b
        else:
            if np.any(_values(a) <= 0):
                raise DomainError("variable exponent needs a positive base", to_string(node))
            if isinstance(a, Taylor2) or isinstance(b, Taylor2):
                if not isinstance(a, Taylor2):
                    result = (b * np.log(a)).exp()
                else:
                    result = a**b
            else:
                result = np.power(a, b)
        return _check_finite(result, node)


def evaluate(node: Expression, x):
    """Evaluate at points ``x`` of shape ``(..., m)``; returns shape ``(...)``."""
    x = np.asarray(x, dtype=float)
    env = [x[..., k] for k in range(x.shape[-1])]
    out = _eval(node, env)
    return np.broadcast_to(np.asarray(out, dtype=float), x.shape[:-1]).copy()


def evaluate_jet(node: Expression, x) -> Taylor2:
    """Value, gradient and Hessian of ``node`` at ``x`` by forward-mode jets."""
    x = np.asarray(x, dtype=float)
    env = Taylor2.variables(x)
    out = _eval(node, env)
    if not isinstance(out, Taylor2):
        out = Taylor2.constant(out, x.shape[-1], x.shape[:-1])
    return out
