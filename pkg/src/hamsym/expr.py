"""Scalar expressions over named variables.

Expressions are parsed once into an immutable AST and compiled to a Python
closure.  The closure only uses ``+ - * /`` and the helper functions defined
here, so the same compiled expression evaluates on plain floats, on
:class:`~hamsym.autodiff.Dual` and on :class:`~hamsym.autodiff.HyperDual`.

Grammar::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := atom ('^' unary)?          # right associative
    atom    := NUMBER | NAME | NAME '(' expr ')' | '(' expr ')'
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Mapping, Union

from .errors import EvalError, ParseError

FUNCTIONS = ("sin", "cos", "tan", "atan", "sqrt", "exp", "log", "abs")
CONSTANTS = {"pi": math.pi}
MAX_INT_POWER = 8


# -- AST ---------------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Const:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Node"


Node = Union[Num, Var, Const, Neg, BinOp, Call]

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}
_NEG_PREC = 3
_ATOM_PREC = 5


def _prec(node: Node) -> int:
    if isinstance(node, BinOp):
        return _PREC[node.op]
    if isinstance(node, Neg):
        return _NEG_PREC
    return _ATOM_PREC


def _fmt_num(value: float) -> str:
    text = repr(float(value))
    if text.endswith(".0"):
        text = text[:-2]
    return text


def to_text(node: Node) -> str:
    """Render ``node`` with the minimal parentheses needed to re-parse it."""
    if isinstance(node, Num):
        return _fmt_num(node.value)
    if isinstance(node, (Var, Const)):
        return node.name
    if isinstance(node, Call):
        return f"{node.func}({to_text(node.arg)})"
    if isinstance(node, _Sign):
        return f"sign({to_text(node.arg)})"
    if isinstance(node, Neg):
        inner = to_text(node.operand)
        if _prec(node.operand) < _NEG_PREC:
            inner = f"({inner})"
        return f"-{inner}"
    left, right = to_text(node.left), to_text(node.right)
    p = _PREC[node.op]
    if node.op == "^":
        if _prec(node.left) <= p:
            left = f"({left})"
        if _prec(node.right) < _NEG_PREC:
            right = f"({right})"
        return f"{left}^{right}"
    if _prec(node.left) < p:
        left = f"({left})"
    if _prec(node.right) <= p:
        right = f"({right})"
    return f"{left} {node.op} {right}"


# -- parser ------------------------------------------------------------------

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z][A-Za-z0-9_]*)
  | (?P<op>[-+*/^()])
    """,
    re.VERBOSE,
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unknown character {text[pos]!r}", _byte_offset(text, pos))
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(), pos))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


def _byte_offset(text: str, pos: int) -> int:
    return len(text[:pos].encode("utf-8"))


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    @property
    def tok(self):
        return self.tokens[self.i]

    def error(self, message: str, pos: int | None = None) -> ParseError:
        if pos is None:
            pos = self.tok[2]
        return ParseError(message, _byte_offset(self.text, pos))

    def accept(self, value: str) -> bool:
        if self.tok[0] == "op" and self.tok[1] == value:
            self.i += 1
            return True
        return False

    def parse(self) -> Node:
        if self.tok[0] == "end":
            raise self.error("empty input")
        node = self.expr()
        if self.tok[0] != "end":
            if self.tok[1] == ")":
                raise self.error("unbalanced parentheses")
            raise self.error(f"unexpected token {self.tok[1]!r}")
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.tok[0] == "op" and self.tok[1] in "+-":
            op = self.tok[1]
            self.i += 1
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.tok[0] == "op" and self.tok[1] in "*/":
            op = self.tok[1]
            self.i += 1
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Node:
        if self.accept("-"):
            return Neg(self.unary())
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self.accept("^"):
            return BinOp("^", base, self.unary())
        return base

    def atom(self) -> Node:
        kind, value, pos = self.tok
        if kind == "num":
            if not math.isfinite(float(value)):
                raise self.error(f"number {value} out of range", pos)
            self.i += 1
            return Num(float(value))
        if kind == "name":
            self.i += 1
            if self.accept("("):
                if value not in FUNCTIONS:
                    raise self.error(f"unknown function {value!r}", pos)
                arg = self.expr()
                if not self.accept(")"):
                    raise self.error("unbalanced parentheses")
                return Call(value, arg)
            if value in CONSTANTS:
                return Const(value)
            return Var(value)
        if self.accept("("):
            node = self.expr()
            if not self.accept(")"):
                raise self.error("unbalanced parentheses")
            return node
        raise self.error("expected operand")


# -- scalar helpers ----------------------------------------------------------
# Floats go through ``math``; AD scalars provide methods of the same name.


def _real(x) -> float:
    return x if isinstance(x, float) else x.val


def _div(a, b):
    if _real(b) == 0.0:
        raise EvalError("division by zero")
    return a / b


def _log(x):
    if _real(x) <= 0.0:
        raise EvalError(f"log of non-positive value {_real(x)!r}")
    return math.log(x) if isinstance(x, float) else x.log()


def _sqrt(x):
    if _real(x) < 0.0:
        raise EvalError(f"sqrt of negative value {_real(x)!r}")
    return math.sqrt(x) if isinstance(x, float) else x.sqrt()


def _exp(x):
    return math.exp(x) if isinstance(x, float) else x.exp()


def _unary(name: str) -> Callable:
    fn = getattr(math, name)

    def apply(x):
        return fn(x) if isinstance(x, float) else getattr(x, name)()

    apply.__name__ = name
    return apply


def _abs(x):
    return abs(x) if isinstance(x, float) else x.abs()


def _sign(x):
    # derivative of abs; only reached on floats by symbolic derivatives
    x = _real(x)
    return (x > 0.0) - (x < 0.0) + 0.0


def _ipow(x, n: int):
    if n == 0:
        return 1.0
    result = x
    for _ in range(abs(n) - 1):
        result = result * x
    return _div(1.0, result) if n < 0 else result


def _pow(x, y):
    if isinstance(y, float) and y.is_integer() and abs(y) <= MAX_INT_POWER:
        return _ipow(x, int(y))
    return _exp(y * _log(x))


_NAMESPACE = {
    "_div": _div,
    "_pow": _pow,
    "_ipow": _ipow,
    "_sin": _unary("sin"),
    "_cos": _unary("cos"),
    "_tan": _unary("tan"),
    "_atan": _unary("atan"),
    "_sqrt": _sqrt,
    "_exp": _exp,
    "_log": _log,
    "_abs": _abs,
    "_sign": _sign,
}


def _codegen(node: Node) -> str:
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, Const):
        return repr(CONSTANTS[node.name])
    if isinstance(node, Var):
        return f"env[{node.name!r}]"
    if isinstance(node, Neg):
        return f"(-{_codegen(node.operand)})"
    if isinstance(node, Call):
        return f"_{node.func}({_codegen(node.arg)})"
    if isinstance(node, _Sign):
        return f"_sign({_codegen(node.arg)})"
    left, right = _codegen(node.left), _codegen(node.right)
    if node.op == "/":
        return f"_div({left}, {right})"
    if node.op == "^":
        r = node.right
        if isinstance(r, Neg) and isinstance(r.operand, Num):
            r = Num(-r.operand.value)
        if isinstance(r, Num) and float(r.value).is_integer() and abs(r.value) <= MAX_INT_POWER:
            return f"_ipow({left}, {int(r.value)})"
        return f"_pow({left}, {right})"
    return f"({left} {node.op} {right})"


# -- public API --------------------------------------------------------------


class Expr:
    """A parsed, immutable scalar expression."""

    def __init__(self, node: Node, text: str | None = None):
        self.node = node
        self.text = to_text(node) if text is None else text

    def __repr__(self) -> str:
        return f"Expr({to_text(self.node)!r})"

    def __str__(self) -> str:
        return to_text(self.node)

    def __eq__(self, other) -> bool:
        return isinstance(other, Expr) and self.node == other.node

    def __hash__(self) -> int:
        return self._hash

    @cached_property
    def _hash(self) -> int:
        return hash(self.node)

    @cached_property
    def free_vars(self) -> frozenset[str]:
        return free_vars(self)

    @cached_property
    def _compiled(self) -> Callable:
        code = compile(f"lambda env: {_codegen(self.node)}", f"<expr {self.text}>", "eval")
        return eval(code, dict(_NAMESPACE))

    def __call__(self, bindings: Mapping[str, object]):
        return evaluate(self, bindings)


def parse(text: str) -> Expr:
    """Parse ``text`` into an :class:`Expr`.

    >>> parse("0.5*(p1^2 + 1/q1^2)")
    Expr('0.5 * (p1^2 + 1 / q1^2)')
    """
    return Expr(_Parser(text).parse(), text)


def as_expr(value: Expr | str | float | int) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, (int, float)):
        return Expr(Num(float(value))) if value >= 0 else Expr(Neg(Num(-float(value))))
    return parse(value)


def free_vars(e: Expr | Node) -> frozenset[str]:
    node = e.node if isinstance(e, Expr) else e
    if isinstance(node, Var):
        return frozenset([node.name])
    if isinstance(node, (Num, Const)):
        return frozenset()
    if isinstance(node, Neg):
        return free_vars(node.operand)
    if isinstance(node, (Call, _Sign)):
        return free_vars(node.arg)
    return free_vars(node.left) | free_vars(node.right)


def evaluate(e: Expr, bindings: Mapping[str, object]):
    """Evaluate ``e`` with the scalar arithmetic of the bound values.

    Integer bindings are promoted to float.  Raises :class:`EvalError` on
    unbound variables and domain errors.
    """
    env = {k: float(v) if isinstance(v, int) else v for k, v in bindings.items()}
    return _run(e._compiled, env)


def _run(fn: Callable, env):
    try:
        return fn(env)
    except KeyError as exc:
        raise EvalError(f"unbound variable {exc.args[0]!r}") from None
    except ZeroDivisionError:
        raise EvalError("division by zero") from None
    except (ValueError, OverflowError) as exc:
        raise EvalError(str(exc)) from None


def compile_many(exprs) -> Callable:
    """Compile several expressions into one function returning a tuple.

    The function takes a bindings mapping of floats and raises
    :class:`EvalError` like :func:`evaluate`.
    """
    body = ", ".join(_codegen(as_expr(e).node) for e in exprs)
    fn = eval(compile(f"lambda env: ({body},)", "<exprs>", "eval"), dict(_NAMESPACE))
    return lambda env: _run(fn, env)


# -- symbolic derivatives ----------------------------------------------------


@dataclass(frozen=True)
class _Sign:
    """sign(arg); internal node produced by differentiating abs."""

    arg: "Node"


def _num(x: float) -> Node:
    return Num(x) if x >= 0 else Neg(Num(-x))


def _is_num(node: Node, value: float | None = None) -> bool:
    v = _const_value(node)
    return v is not None and (value is None or v == value)


def _const_value(node: Node) -> float | None:
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Neg) and isinstance(node.operand, Num):
        return -node.operand.value
    return None


def _s_add(a: Node, b: Node) -> Node:
    if _is_num(a, 0.0):
        return b
    if _is_num(b, 0.0):
        return a
    if _is_num(a) and _is_num(b):
        return _num(_const_value(a) + _const_value(b))
    if isinstance(b, Neg):
        return BinOp("-", a, b.operand)
    return BinOp("+", a, b)


def _s_neg(a: Node) -> Node:
    if _is_num(a):
        return _num(-_const_value(a))
    if isinstance(a, Neg):
        return a.operand
    return Neg(a)


def _s_sub(a: Node, b: Node) -> Node:
    return _s_add(a, _s_neg(b))


def _s_mul(a: Node, b: Node) -> Node:
    if _is_num(a, 0.0) or _is_num(b, 0.0):
        return Num(0.0)
    if _is_num(a, 1.0):
        return b
    if _is_num(b, 1.0):
        return a
    if _is_num(a) and _is_num(b):
        return _num(_const_value(a) * _const_value(b))
    if _is_num(a, -1.0):
        return _s_neg(b)
    if _is_num(b, -1.0):
        return _s_neg(a)
    return BinOp("*", a, b)


def _s_div(a: Node, b: Node) -> Node:
    if _is_num(a, 0.0):
        return Num(0.0)
    if _is_num(b, 1.0):
        return a
    return BinOp("/", a, b)


def _s_pow(a: Node, n: float) -> Node:
    if n == 0.0:
        return Num(1.0)
    if n == 1.0:
        return a
    return BinOp("^", a, _num(n))


def _d(node: Node, var: str) -> Node:
    if isinstance(node, (Num, Const)):
        return Num(0.0)
    if isinstance(node, Var):
        return Num(1.0 if node.name == var else 0.0)
    if isinstance(node, _Sign):
        return Num(0.0)
    if var not in free_vars(node):
        return Num(0.0)
    if isinstance(node, Neg):
        return _s_neg(_d(node.operand, var))
    if isinstance(node, Call):
        u, du = node.arg, _d(node.arg, var)
        f = node.func
        if f == "sin":
            outer = Call("cos", u)
        elif f == "cos":
            outer = _s_neg(Call("sin", u))
        elif f == "tan":
            outer = _s_add(Num(1.0), _s_pow(Call("tan", u), 2.0))
        elif f == "atan":
            outer = _s_div(Num(1.0), _s_add(Num(1.0), _s_pow(u, 2.0)))
        elif f == "sqrt":
            outer = _s_div(Num(0.5), Call("sqrt", u))
        elif f == "exp":
            outer = Call("exp", u)
        elif f == "log":
            outer = _s_div(Num(1.0), u)
        else:  # abs
            outer = _Sign(u)
        return _s_mul(outer, du)
    a, b = node.left, node.right
    da, db = _d(a, var), _d(b, var)
    if node.op == "+":
        return _s_add(da, db)
    if node.op == "-":
        return _s_sub(da, db)
    if node.op == "*":
        return _s_add(_s_mul(da, b), _s_mul(a, db))
    if node.op == "/":
        return _s_sub(_s_div(da, b), _s_div(_s_mul(a, db), _s_pow(b, 2.0)))
    n = _const_value(b)
    if n is not None:
        return _s_mul(_s_mul(_num(n), _s_pow(a, n - 1.0)), da)
    # d(a^b) = a^b (db log a + b da / a)
    return _s_mul(node, _s_add(_s_mul(db, Call("log", a)), _s_div(_s_mul(b, da), a)))


def diff(e: Expr | str, var: str) -> Expr:
    """Symbolic partial derivative of ``e`` with light constant folding.

    >>> diff("q1^3 + p1*q1", "q1")
    Expr('3 * q1^2 + p1')
    """
    return Expr(_d(as_expr(e).node, var))


def reference_eval(node: Node, bindings: Mapping[str, float]) -> float:
    """Slow tree-walking evaluator on floats, used to cross-check compilation."""
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Const):
        return CONSTANTS[node.name]
    if isinstance(node, Var):
        return float(bindings[node.name])
    if isinstance(node, Neg):
        return -reference_eval(node.operand, bindings)
    if isinstance(node, Call):
        return _NAMESPACE["_" + node.func](reference_eval(node.arg, bindings))
    if isinstance(node, _Sign):
        return _sign(reference_eval(node.arg, bindings))
    a = reference_eval(node.left, bindings)
    b = reference_eval(node.right, bindings)
    if node.op == "+":
        return a + b
    if node.op == "-":
        return a - b
    if node.op == "*":
        return a * b
    if node.op == "/":
        return _div(a, b)
    return _pow(a, b)
