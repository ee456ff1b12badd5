"""Forward-mode automatic differentiation.

:class:`Dual` carries a value and a vector of directional derivatives, so one
evaluation of an :class:`~hamsym.expr.Expr` yields a full gradient.
:class:`HyperDual` carries two first-order slots and their mixed second
derivative.
"""

from __future__ import annotations

import math
from typing import Mapping, Sequence

import numpy as np

from .expr import Expr, as_expr, evaluate

_SCALARS = (float, int)


class Dual:
    """``val + der . eps`` with ``eps_i eps_j = 0``."""

    __slots__ = ("val", "der")

    def __init__(self, val: float, der):
        self.val = val
        self.der = der

    def __repr__(self) -> str:
        return f"Dual({self.val!r}, {self.der!r})"

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val + other.val, self.der + other.der)
        return Dual(self.val + other, self.der)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val - other.val, self.der - other.der)
        return Dual(self.val - other, self.der)

    def __rsub__(self, other):
        return Dual(other - self.val, -self.der)

    def __neg__(self):
        return Dual(-self.val, -self.der)

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val * other.val, self.der * other.val + other.der * self.val)
        return Dual(self.val * other, self.der * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            val = self.val / other.val
            return Dual(val, (self.der - other.der * val) / other.val)
        return Dual(self.val / other, self.der / other)

    def __rtruediv__(self, other):
        val = other / self.val
        return Dual(val, self.der * (-val / self.val))

    def _chain(self, f0: float, f1: float) -> "Dual":
        return Dual(f0, self.der * f1)

    def sin(self):
        return self._chain(math.sin(self.val), math.cos(self.val))

    def cos(self):
        return self._chain(math.cos(self.val), -math.sin(self.val))

    def tan(self):
        t = math.tan(self.val)
        return self._chain(t, 1.0 + t * t)

    def atan(self):
        return self._chain(math.atan(self.val), 1.0 / (1.0 + self.val * self.val))

    def sqrt(self):
        s = math.sqrt(self.val)
        return self._chain(s, 0.5 / s if s > 0.0 else math.inf)

    def exp(self):
        e = math.exp(self.val)
        return self._chain(e, e)

    def log(self):
        return self._chain(math.log(self.val), 1.0 / self.val)

    def abs(self):
        # kink at zero: derivative taken as sign(0) = 0
        return self._chain(abs(self.val), float(np.sign(self.val)))


class HyperDual:
    """``val + d1 e1 + d2 e2 + d12 e1 e2`` with ``e1^2 = e2^2 = 0``."""

    __slots__ = ("val", "d1", "d2", "d12")

    def __init__(self, val: float, d1: float = 0.0, d2: float = 0.0, d12: float = 0.0):
        self.val = val
        self.d1 = d1
        self.d2 = d2
        self.d12 = d12

    def __repr__(self) -> str:
        return f"HyperDual({self.val!r}, {self.d1!r}, {self.d2!r}, {self.d12!r})"

    def __add__(self, o):
        if isinstance(o, HyperDual):
            return HyperDual(self.val + o.val, self.d1 + o.d1, self.d2 + o.d2, self.d12 + o.d12)
        return HyperDual(self.val + o, self.d1, self.d2, self.d12)

    __radd__ = __add__

    def __sub__(self, o):
        if isinstance(o, HyperDual):
            return HyperDual(self.val - o.val, self.d1 - o.d1, self.d2 - o.d2, self.d12 - o.d12)
        return HyperDual(self.val - o, self.d1, self.d2, self.d12)

    def __rsub__(self, o):
        return HyperDual(o - self.val, -self.d1, -self.d2, -self.d12)

    def __neg__(self):
        return HyperDual(-self.val, -self.d1, -self.d2, -self.d12)

    def __mul__(self, o):
        if isinstance(o, HyperDual):
            return HyperDual(
                self.val * o.val,
                self.val * o.d1 + self.d1 * o.val,
                self.val * o.d2 + self.d2 * o.val,
                self.val * o.d12 + self.d1 * o.d2 + self.d2 * o.d1 + self.d12 * o.val,
            )
        return HyperDual(self.val * o, self.d1 * o, self.d2 * o, self.d12 * o)

    __rmul__ = __mul__

    def _recip(self) -> "HyperDual":
        inv = 1.0 / self.val
        return self._chain(inv, -inv * inv, 2.0 * inv * inv * inv)

    def __truediv__(self, o):
        if isinstance(o, HyperDual):
            return self * o._recip()
        return HyperDual(self.val / o, self.d1 / o, self.d2 / o, self.d12 / o)

    def __rtruediv__(self, o):
        return self._recip() * o

    def _chain(self, f0: float, f1: float, f2: float) -> "HyperDual":
        return HyperDual(
            f0,
            f1 * self.d1,
            f1 * self.d2,
            f1 * self.d12 + f2 * self.d1 * self.d2,
        )

    def sin(self):
        s, c = math.sin(self.val), math.cos(self.val)
        return self._chain(s, c, -s)

    def cos(self):
        s, c = math.sin(self.val), math.cos(self.val)
        return self._chain(c, -s, -c)

    def tan(self):
        t = math.tan(self.val)
        sec2 = 1.0 + t * t
        return self._chain(t, sec2, 2.0 * t * sec2)

    def atan(self):
        x = self.val
        d = 1.0 / (1.0 + x * x)
        return self._chain(math.atan(x), d, -2.0 * x * d * d)

    def sqrt(self):
        s = math.sqrt(self.val)
        return self._chain(s, 0.5 / s, -0.25 / (s * self.val))

    def exp(self):
        e = math.exp(self.val)
        return self._chain(e, e, e)

    def log(self):
        x = self.val
        return self._chain(math.log(x), 1.0 / x, -1.0 / (x * x))

    def abs(self):
        return self._chain(abs(self.val), float(np.sign(self.val)), 0.0)


class Jet2:
    """Value, gradient and Hessian carried together (truncated second order)."""

    __slots__ = ("val", "g", "H")

    def __init__(self, val: float, g, H):
        self.val = val
        self.g = g
        self.H = H

    def __repr__(self) -> str:
        return f"Jet2({self.val!r}, {self.g!r}, {self.H!r})"

    def __add__(self, o):
        if isinstance(o, Jet2):
            return Jet2(self.val + o.val, self.g + o.g, self.H + o.H)
        return Jet2(self.val + o, self.g, self.H)

    __radd__ = __add__

    def __sub__(self, o):
        if isinstance(o, Jet2):
            return Jet2(self.val - o.val, self.g - o.g, self.H - o.H)
        return Jet2(self.val - o, self.g, self.H)

    def __rsub__(self, o):
        return Jet2(o - self.val, -self.g, -self.H)

    def __neg__(self):
        return Jet2(-self.val, -self.g, -self.H)

    def __mul__(self, o):
        if isinstance(o, Jet2):
            cross = np.outer(self.g, o.g)
            return Jet2(
                self.val * o.val,
                self.g * o.val + o.g * self.val,
                self.H * o.val + o.H * self.val + cross + cross.T,
            )
        return Jet2(self.val * o, self.g * o, self.H * o)

    __rmul__ = __mul__

    def _recip(self) -> "Jet2":
        inv = 1.0 / self.val
        return self._chain(inv, -inv * inv, 2.0 * inv * inv * inv)

    def __truediv__(self, o):
        if isinstance(o, Jet2):
            return self * o._recip()
        return Jet2(self.val / o, self.g / o, self.H / o)

    def __rtruediv__(self, o):
        return self._recip() * o

    def _chain(self, f0: float, f1: float, f2: float) -> "Jet2":
        return Jet2(f0, f1 * self.g, f1 * self.H + f2 * np.outer(self.g, self.g))

    sin = HyperDual.sin
    cos = HyperDual.cos
    tan = HyperDual.tan
    atan = HyperDual.atan
    sqrt = HyperDual.sqrt
    exp = HyperDual.exp
    log = HyperDual.log
    abs = HyperDual.abs


# -- helpers over expressions -------------------------------------------------


def _value(x) -> float:
    return x.val if isinstance(x, (Dual, HyperDual, Jet2)) else float(x)


def value_and_grad(
    f: Expr | str, point: Mapping[str, float], wrt: Sequence[str]
) -> tuple[float, np.ndarray]:
    """Value of ``f`` and its gradient with respect to ``wrt`` in one pass."""
    f = as_expr(f)
    m = len(wrt)
    env = {k: float(v) for k, v in point.items()}
    eye = np.eye(m)
    for i, name in enumerate(wrt):
        env[name] = Dual(float(point[name]), eye[i])
    out = evaluate(f, env)
    if isinstance(out, Dual):
        return out.val, np.array(out.der, dtype=float)
    return float(out), np.zeros(m)


def grad(f: Expr | str, point: Mapping[str, float], wrt: Sequence[str]) -> np.ndarray:
    """Forward-mode gradient of ``f`` at ``point``.

    >>> grad("p1*q1", {"q1": 3, "p1": 5}, ["q1", "p1"])
    array([5., 3.])
    """
    return value_and_grad(f, point, wrt)[1]


def jacobian(
    F: Sequence[Expr | str], point: Mapping[str, float], wrt: Sequence[str]
) -> np.ndarray:
    """Matrix whose row ``i`` is ``grad(F[i])``."""
    return np.array([grad(f, point, wrt) for f in F], dtype=float).reshape(len(F), len(wrt))


def directional(
    f: Expr | str, point: Mapping[str, float], direction: Mapping[str, float]
) -> tuple[float, float]:
    """``f`` and its derivative along ``direction`` (missing entries are 0)."""
    f = as_expr(f)
    env = {k: float(v) for k, v in point.items()}
    for name, d in direction.items():
        env[name] = Dual(float(point[name]), np.array([float(d)]))
    out = evaluate(f, env)
    if isinstance(out, Dual):
        return out.val, float(out.der[0])
    return float(out), 0.0


def directional2(
    f: Expr | str,
    point: Mapping[str, float],
    u: Mapping[str, float],
    v: Mapping[str, float],
) -> tuple[float, float, float, float]:
    """Return ``(f, D_u f, D_v f, D_u D_v f)`` from one hyper-dual evaluation."""
    f = as_expr(f)
    env = {}
    for name, x in point.items():
        du, dv = float(u.get(name, 0.0)), float(v.get(name, 0.0))
        env[name] = HyperDual(float(x), du, dv) if (du or dv) else float(x)
    out = evaluate(f, env)
    if isinstance(out, HyperDual):
        return out.val, out.d1, out.d2, out.d12
    return float(out), 0.0, 0.0, 0.0


def hessian(
    f: Expr | str, point: Mapping[str, float], wrt: Sequence[str]
) -> tuple[float, np.ndarray, np.ndarray]:
    """Value, gradient and Hessian of ``f`` in one second-order pass."""
    f = as_expr(f)
    m = len(wrt)
    env = {k: float(v) for k, v in point.items()}
    eye = np.eye(m)
    zero = np.zeros((m, m))
    for i, name in enumerate(wrt):
        env[name] = Jet2(float(point[name]), eye[i], zero)
    out = evaluate(f, env)
    if isinstance(out, Jet2):
        return out.val, np.array(out.g, dtype=float), np.array(out.H, dtype=float)
    return float(out), np.zeros(m), zero.copy()
