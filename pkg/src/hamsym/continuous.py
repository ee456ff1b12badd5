"""Canonical Hamiltonian systems and their Lie point symmetries.

A symmetry ``X = xi d/dt + eta^i d/dq^i + zeta_i d/dp_i`` leaves the
elementary action ``p dq - H dt`` invariant when

    zeta_i qdot^i + p_i D(eta^i) - X(H) - H D(xi) = D(V)

holds on solutions (``V = 0`` for plain invariance); the conserved quantity is
then ``I = p_i eta^i - xi H - V``.  Everything here is evaluated pointwise:
wherever a total derivative ``D`` appears "on solutions", ``qdot`` and ``pdot``
are replaced by the Hamiltonian vector field at the same state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .autodiff import Dual, directional2, value_and_grad
from .errors import ConfigError, DomainError, EvalError, NumericalError
from .expr import Expr, as_expr, evaluate

SINGULAR_EPS = 1e-12


def qnames(n: int) -> list[str]:
    return [f"q{i}" for i in range(1, n + 1)]


def pnames(n: int) -> list[str]:
    return [f"p{i}" for i in range(1, n + 1)]


class Residual(float):
    """A float residual that remembers the magnitude of its largest summand."""

    scale: float

    def __new__(cls, terms: Iterable[float]):
        terms = [float(x) for x in terms]
        obj = super().__new__(cls, sum(terms))
        obj.scale = max((abs(x) for x in terms), default=0.0)
        return obj

    @classmethod
    def difference(cls, lhs: Sequence[float], rhs: Sequence[float]) -> "Residual":
        """``|sum(lhs) - sum(rhs)|`` scaled by the largest term on either side."""
        obj = super().__new__(cls, abs(sum(lhs) - sum(rhs)))
        obj.scale = max((abs(x) for x in [*lhs, *rhs]), default=0.0)
        return obj

    @property
    def relative(self) -> float:
        return abs(float(self)) / (1.0 + self.scale)


@dataclass
class State:
    """Phase-space point ``(t, q, p)``."""

    t: float
    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        self.t = float(self.t)
        self.q = np.atleast_1d(np.asarray(self.q, dtype=float)).copy()
        self.p = np.atleast_1d(np.asarray(self.p, dtype=float)).copy()
        if self.q.shape != self.p.shape:
            raise ValueError("q and p must have the same length")
        if not (np.isfinite(self.t) and np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.p))):
            raise ValueError("state components must be finite")

    @property
    def n(self) -> int:
        return len(self.q)

    def bindings(self) -> dict[str, float]:
        env = {"t": self.t}
        env.update(zip(qnames(self.n), self.q.tolist()))
        env.update(zip(pnames(self.n), self.p.tolist()))
        return env


def _check_vars(exprs: Mapping[str, Expr], allowed: set[str]) -> None:
    for label, e in exprs.items():
        unknown = e.free_vars - allowed
        if unknown:
            raise ConfigError(f"{label} uses undeclared variables {sorted(unknown)}")


@dataclass
class Symmetry:
    """Generator coefficients of a Lie point symmetry, optionally with a
    divergence function ``V``."""

    name: str
    xi: Expr
    eta: tuple[Expr, ...]
    zeta: tuple[Expr, ...]
    V: Expr | None = None

    def __post_init__(self):
        self.xi = as_expr(self.xi)
        self.eta = tuple(as_expr(e) for e in self.eta)
        self.zeta = tuple(as_expr(z) for z in self.zeta)
        if self.V is not None:
            self.V = as_expr(self.V)
        if len(self.eta) != len(self.zeta):
            raise ConfigError(f"symmetry {self.name}: eta and zeta arity differ")

    @property
    def n(self) -> int:
        return len(self.eta)

    def exprs(self) -> dict[str, Expr]:
        out = {"xi": self.xi}
        out.update({f"eta{i + 1}": e for i, e in enumerate(self.eta)})
        out.update({f"zeta{i + 1}": z for i, z in enumerate(self.zeta)})
        if self.V is not None:
            out["V"] = self.V
        return out

    def without_divergence(self) -> "Symmetry":
        return Symmetry(self.name, self.xi, self.eta, self.zeta, None)


@dataclass
class ContinuousSystem:
    """Canonical system generated by ``H(t, q, p)``.

    ``singular`` marks Hamiltonians with a pole at ``q = 0``; states with
    ``|q| < 1e-12`` are then rejected instead of evaluated.
    """

    n: int
    H: Expr
    params: dict[str, float] = field(default_factory=dict)
    singular: bool = False

    def __post_init__(self):
        self.H = as_expr(self.H)
        self.params = {k: float(v) for k, v in self.params.items()}
        if self.n < 1:
            raise ConfigError("dimension n must be at least 1")
        _check_vars({"H": self.H}, self.allowed_vars)

    @property
    def state_vars(self) -> list[str]:
        return ["t", *qnames(self.n), *pnames(self.n)]

    @property
    def allowed_vars(self) -> set[str]:
        return set(self.state_vars) | set(self.params)

    def check_symmetry(self, sym: Symmetry) -> None:
        if sym.n != self.n:
            raise ConfigError(f"symmetry {sym.name} has arity {sym.n}, system has n={self.n}")
        _check_vars({f"{sym.name}.{k}": e for k, e in sym.exprs().items()}, self.allowed_vars)

    def bindings(self, s: State) -> dict[str, float]:
        if s.n != self.n:
            raise ValueError(f"state has dimension {s.n}, system has n={self.n}")
        if self.singular and float(np.linalg.norm(s.q)) < SINGULAR_EPS:
            raise DomainError(f"state too close to the singularity q=0 (|q|={np.linalg.norm(s.q):.3g})")
        env = dict(self.params)
        env.update(s.bindings())
        return env

    def hamiltonian(self, s: State) -> float:
        return float(evaluate(self.H, self.bindings(s)))


# -- local jets ----------------------------------------------------------------


class _Jet:
    """Values and (t, q, p)-gradients of H and a symmetry's coefficients."""

    def __init__(self, sys: ContinuousSystem, sym: Symmetry | None, s: State):
        self.sys, self.sym, self.s = sys, sym, s
        self.env = sys.bindings(s)
        self.vars = sys.state_vars
        n = sys.n
        self.H, gH = value_and_grad(sys.H, self.env, self.vars)
        self.H_t, self.H_q, self.H_p = gH[0], gH[1 : n + 1], gH[n + 1 :]
        if sym is not None:
            self.xi = value_and_grad(sym.xi, self.env, self.vars)
            self.eta = [value_and_grad(e, self.env, self.vars) for e in sym.eta]
            self.zeta = [value_and_grad(z, self.env, self.vars) for z in sym.zeta]
            self.V = value_and_grad(sym.V, self.env, self.vars) if sym.V is not None else None

    @property
    def qdot(self) -> np.ndarray:
        return self.H_p

    @property
    def pdot(self) -> np.ndarray:
        return -self.H_q

    def D(self, jet, qdot, pdot) -> float:
        """Total time derivative of a (value, gradient) pair."""
        n = self.sys.n
        g = jet[1]
        return float(g[0] + g[1 : n + 1] @ qdot + g[n + 1 :] @ pdot)

    def X_terms(self) -> list[float]:
        """Summands of X(H): xi H_t, eta^i H_q^i, zeta_i H_p_i."""
        out = [self.xi[0] * self.H_t]
        out += [e[0] * h for e, h in zip(self.eta, self.H_q)]
        out += [z[0] * h for z, h in zip(self.zeta, self.H_p)]
        return out

    def action_terms(self, qdot, pdot, with_v: bool = True) -> list[float]:
        terms = [z[0] * qd for z, qd in zip(self.zeta, qdot)]
        terms += [pi * self.D(e, qdot, pdot) for pi, e in zip(self.s.p, self.eta)]
        terms += [-x for x in self.X_terms()]
        terms.append(-self.H * self.D(self.xi, qdot, pdot))
        if with_v and self.V is not None:
            terms.append(-self.D(self.V, qdot, pdot))
        return terms


# -- operations ----------------------------------------------------------------


def vector_field(sys: ContinuousSystem, s: State) -> tuple[np.ndarray, np.ndarray]:
    """``(dH/dp, -dH/dq)`` at ``s``."""
    _, g = value_and_grad(sys.H, sys.bindings(s), sys.state_vars)
    n = sys.n
    return g[n + 1 :].copy(), -g[1 : n + 1]


def invariance_terms(
    sys: ContinuousSystem, sym: Symmetry, s: State, with_v: bool = True
) -> list[float]:
    sys.check_symmetry(sym)
    jet = _Jet(sys, sym, s)
    return jet.action_terms(jet.qdot, jet.pdot, with_v=with_v)


def invariance_residual(
    sys: ContinuousSystem, sym: Symmetry, s: State, with_v: bool = True
) -> Residual:
    """Invariance expression of the elementary action on solutions at ``s``.

    With ``sym.V`` present (and ``with_v``), ``D(V)`` is subtracted, giving the
    divergence-invariance residual.  Zero means (divergence) invariance.
    """
    return Residual(invariance_terms(sys, sym, s, with_v=with_v))


def first_integral_value(sys: ContinuousSystem, sym: Symmetry, s: State) -> float:
    """``p_i eta^i - xi H - V`` at ``s`` (``V`` = 0 when absent)."""
    sys.check_symmetry(sym)
    env = sys.bindings(s)
    value = sum(p * float(evaluate(e, env)) for p, e in zip(s.p, sym.eta))
    value -= float(evaluate(sym.xi, env)) * float(evaluate(sys.H, env))
    if sym.V is not None:
        value -= float(evaluate(sym.V, env))
    return value


def check_hamiltonian_identity(
    sys: ContinuousSystem,
    sym: Symmetry,
    s: State,
    qdot: Sequence[float],
    pdot: Sequence[float],
) -> Residual:
    """Absolute mismatch of the two sides of the Hamiltonian identity.

    ``qdot`` and ``pdot`` are arbitrary: the identity holds off solutions.
    The right-hand total derivative ``D[p eta - xi H]`` is obtained by pushing
    a dual number along the tangent ``(1, qdot, pdot)`` through the bracket,
    independently of the product-rule expansion on the left.
    """
    sys.check_symmetry(sym)
    qdot = np.asarray(qdot, dtype=float)
    pdot = np.asarray(pdot, dtype=float)
    jet = _Jet(sys, sym, s)
    lhs = jet.action_terms(qdot, pdot, with_v=False)

    DH = jet.D((jet.H, np.concatenate([[jet.H_t], jet.H_q, jet.H_p])), qdot, pdot)
    rhs = [jet.xi[0] * (DH - jet.H_t)]
    rhs += [-e[0] * (pd + hq) for e, pd, hq in zip(jet.eta, pdot, jet.H_q)]
    rhs += [z[0] * (qd - hp) for z, qd, hp in zip(jet.zeta, qdot, jet.H_p)]

    env = dict(sys.params)
    env["t"] = Dual(s.t, np.array([1.0]))
    for name, x, d in zip(qnames(sys.n), s.q, qdot):
        env[name] = Dual(float(x), np.array([d]))
    p_dual = [Dual(float(x), np.array([d])) for x, d in zip(s.p, pdot)]
    for name, pd in zip(pnames(sys.n), p_dual):
        env[name] = pd
    bracket = sum(
        (pd * evaluate(e, env) for pd, e in zip(p_dual, sym.eta)), Dual(0.0, np.zeros(1))
    ) - evaluate(sym.xi, env) * evaluate(sys.H, env)
    rhs.append(float(bracket.der[0]))
    return Residual.difference(lhs, rhs)


def equation_invariance_residuals(
    sys: ContinuousSystem, sym: Symmetry, s: State
) -> tuple[np.ndarray, np.ndarray]:
    """Determining equations of the canonical system, on solutions.

    ``a_j = D(eta^j) - qdot^j D(xi) - X(dH/dp_j)`` and
    ``b_j = -D(zeta_j) + pdot_j D(xi) - X(dH/dq^j)``; both vanish iff the
    equations admit ``sym`` at ``s``.
    """
    sys.check_symmetry(sym)
    jet = _Jet(sys, sym, s)
    n = sys.n
    qdot, pdot = jet.qdot, jet.pdot
    Dxi = jet.D(jet.xi, qdot, pdot)
    direction = {"t": jet.xi[0]}
    direction.update(zip(qnames(n), (e[0] for e in jet.eta)))
    direction.update(zip(pnames(n), (z[0] for z in jet.zeta)))

    def X_of_partial(var: str) -> float:
        return directional2(sys.H, jet.env, {var: 1.0}, direction)[3]

    a = np.array(
        [jet.D(jet.eta[j], qdot, pdot) - qdot[j] * Dxi - X_of_partial(f"p{j + 1}") for j in range(n)]
    )
    b = np.array(
        [-jet.D(jet.zeta[j], qdot, pdot) + pdot[j] * Dxi - X_of_partial(f"q{j + 1}") for j in range(n)]
    )
    return a, b


class IntegrationError(NumericalError):
    """Evaluation failed mid-trajectory; ``trajectory`` holds the states so far."""

    def __init__(self, message: str, trajectory: list[State]):
        super().__init__(message)
        self.trajectory = trajectory


def rk4_step(sys: ContinuousSystem, s: State, dt: float) -> State:
    def f(t, q, p):
        return vector_field(sys, State(t, q, p))

    k1q, k1p = f(s.t, s.q, s.p)
    k2q, k2p = f(s.t + dt / 2, s.q + dt / 2 * k1q, s.p + dt / 2 * k1p)
    k3q, k3p = f(s.t + dt / 2, s.q + dt / 2 * k2q, s.p + dt / 2 * k2p)
    k4q, k4p = f(s.t + dt, s.q + dt * k3q, s.p + dt * k3p)
    q = s.q + dt / 6 * (k1q + 2 * k2q + 2 * k3q + k4q)
    p = s.p + dt / 6 * (k1p + 2 * k2p + 2 * k3p + k4p)
    return State(s.t + dt, q, p)


def integrate_reference(sys: ContinuousSystem, s0: State, t_end: float, dt: float) -> list[State]:
    """Fixed-step classical RK4 from ``s0.t`` to ``t_end``.

    The last step is shortened so the trajectory ends exactly at ``t_end``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    span = t_end - s0.t
    if span < 0 or not np.isfinite(span):
        raise ValueError("t_end must be finite and not before the initial time")
    nfull = int(np.floor(span / dt * (1 + 1e-12)))
    times = [s0.t + k * dt for k in range(nfull + 1)]
    if t_end - times[-1] > 1e-12 * max(1.0, abs(t_end)):
        times.append(t_end)
    elif nfull > 0:
        times[-1] = t_end

    traj = [s0]
    s = s0
    for t_next in times[1:]:
        try:
            s = rk4_step(sys, s, t_next - s.t)
        except (EvalError, ValueError) as exc:
            raise IntegrationError(f"integration failed at t={s.t:.17g}: {exc}", traj) from exc
        s.t = t_next
        traj.append(s)
    return traj


@dataclass
class FirstIntegral:
    """A named conserved quantity, either from a symmetry or a closed form."""

    name: str
    evaluate: Callable[[State], float]
    symmetry: Symmetry | None = None

    @classmethod
    def from_symmetry(cls, sys: ContinuousSystem, sym: Symmetry, name: str | None = None):
        return cls(name or f"I[{sym.name}]", lambda s: first_integral_value(sys, sym, s), sym)

    @classmethod
    def from_expr(cls, sys: ContinuousSystem, name: str, expr: Expr | str):
        e = as_expr(expr)
        return cls(name, lambda s: float(evaluate(e, sys.bindings(s))))

    def __call__(self, s: State) -> float:
        return self.evaluate(s)


def monitor(traj: Sequence[State], integrals: Sequence[FirstIntegral]) -> dict[str, float]:
    """Maximum ``|I(t) - I(t0)|`` along ``traj`` for each integral."""
    if not traj:
        raise ValueError("empty trajectory")
    report = {}
    for integral in integrals:
        values = np.array([integral(s) for s in traj])
        report[integral.name] = float(np.max(np.abs(values - values[0])))
    return report
