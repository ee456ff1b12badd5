"""Discrete Hamiltonian equations on a self-determined lattice.

The discrete Hamiltonian ``Hd(t, hp, q, pp)`` is written in terms of the
forward step ``hp = t+ - t`` and the forward momentum ``pp = p+``.  Stationarity
of ``sum(pp.(q+ - q) - Hd*hp)`` gives, for every interior node,

    (q+ - q)/h+ =  dHd/dpp
    (p+ - p)/h+ = -dHd/dq
    h+ Hd_t1 - Hd + h- Hd-_t2 + Hd- = 0

where ``Hd- = Hd(t-, h-, q-, p)``.  Through ``hp = t+ - t`` the derivative in
the first time slot is ``d/dt - d/dhp`` and in the second slot ``d/dhp``.
The third equation fixes the next step size, so the integrator state is the
pair of nodes ``(prev, cur)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .autodiff import directional2
from .continuous import Residual, State, Symmetry, _check_vars, pnames, qnames
from .errors import (
    ConfigError,
    DomainError,
    EvalError,
    NewtonError,
    NumericalError,
    SingularJacobianError,
)
from .expr import Expr, as_expr, compile_many, diff, evaluate

log = logging.getLogger(__name__)

DiscreteSymmetry = Symmetry

NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 50
NEWTON_MAX_HALVINGS = 20
DEGENERATE_RTOL = 1e-10
MAX_COND = 1e14


@dataclass
class LatticePoint(State):
    """Lattice node.  ``h`` is the step that produced it, kept exactly so that
    step sizes do not pick up the rounding of ``t`` (about ``ulp(t)``)."""

    h: float | None = None

    def __post_init__(self):
        super().__post_init__()
        if self.h is not None:
            self.h = float(self.h)
            if not (np.isfinite(self.h) and self.h > 0):
                raise ValueError("lattice step h must be positive")


def interval(prev: State, cur: State) -> float:
    """Step between consecutive nodes, preferring the stored step of ``cur``."""
    h = getattr(cur, "h", None)
    return cur.t - prev.t if h is None else h


def ppnames(n: int) -> list[str]:
    return [f"pp{i}" for i in range(1, n + 1)]


def qmnames(n: int) -> list[str]:
    return [f"qm{i}" for i in range(1, n + 1)]


# Keyed on the expression, so copies made by with_step share one compilation.
@lru_cache(maxsize=64)
def _compiled_gradient(Hd: Expr, names: tuple[str, ...]):
    return compile_many([Hd, *(diff(Hd, v) for v in names)])


@lru_cache(maxsize=64)
def _compiled_hessian(Hd: Expr, names: tuple[str, ...]):
    # upper triangle of the Hessian, row by row
    first = [diff(Hd, v) for v in names]
    m = len(first)
    fn = compile_many([diff(first[i], names[j]) for i in range(m) for j in range(i, m)])
    rows, cols = np.triu_indices(m)
    return fn, rows, cols


@dataclass
class DiscreteSystem:
    """Discrete Hamiltonian over ``t, hp, q1..qn, pp1..ppn``.

    ``derived`` holds parameters defined as expressions of the first step
    ``h0`` (and of ``params``); they are resolved by :meth:`with_step`.
    """

    n: int
    Hd: Expr
    params: dict[str, float] = field(default_factory=dict)
    derived: dict[str, Expr] = field(default_factory=dict)
    singular: bool = False

    def __post_init__(self):
        self.Hd = as_expr(self.Hd)
        self.params = {k: float(v) for k, v in self.params.items()}
        self.derived = {k: as_expr(v) for k, v in self.derived.items()}
        if self.n < 1:
            raise ConfigError("dimension n must be at least 1")
        _check_vars({"Hd": self.Hd}, set(self.hd_vars) | self.param_names)
        _check_vars(
            {f"param {k}": e for k, e in self.derived.items()}, set(self.params) | {"h0"}
        )

    @property
    def hd_vars(self) -> list[str]:
        return ["t", "hp", *qnames(self.n), *ppnames(self.n)]

    @property
    def sym_vars(self) -> list[str]:
        return ["t", *qnames(self.n), *pnames(self.n)]

    @property
    def integral_vars(self) -> list[str]:
        """Variables allowed in closed-form discrete integrals."""
        return ["t", "hm", *qmnames(self.n), *qnames(self.n), *pnames(self.n)]

    @property
    def param_names(self) -> set[str]:
        return set(self.params) | set(self.derived) | {"h0"}

    @property
    def time_invariant(self) -> bool:
        return "t" not in self.Hd.free_vars

    def with_step(self, h0: float) -> "DiscreteSystem":
        """Copy with ``h0`` and every derived parameter bound to numbers."""
        params = dict(self.params)
        params["h0"] = float(h0)
        for name, e in self.derived.items():
            params[name] = float(evaluate(e, params))
        return replace(self, params=params, derived={})

    @property
    def _grad_fn(self):
        return _compiled_gradient(self.Hd, tuple(self.hd_vars))

    @property
    def _hess_fn(self):
        return _compiled_hessian(self.Hd, tuple(self.hd_vars))

    def derivatives(self, env: dict[str, float], second: bool = False):
        """``(Hd, gradient, Hessian or None)`` over :attr:`hd_vars` at ``env``.

        Uses symbolic derivatives of ``Hd``, compiled once per expression.
        """
        out = self._grad_fn(env)
        g = np.array(out[1:], dtype=float)
        if not second:
            return float(out[0]), g, None
        fn, rows, cols = self._hess_fn
        H = np.empty((len(g), len(g)))
        upper = fn(env)
        H[rows, cols] = upper
        H[cols, rows] = upper
        return float(out[0]), g, H

    def check_symmetry(self, sym: Symmetry) -> None:
        if sym.n != self.n:
            raise ConfigError(f"symmetry {sym.name} has arity {sym.n}, system has n={self.n}")
        _check_vars(
            {f"{sym.name}.{k}": e for k, e in sym.exprs().items()},
            set(self.sym_vars) | self.param_names,
        )

    def _params(self) -> dict[str, float]:
        if self.derived:
            raise ConfigError(
                f"parameters {sorted(self.derived)} depend on h0; bind them with with_step(h0)"
            )
        return dict(self.params)

    def _guard(self, q: np.ndarray) -> None:
        if self.singular and float(np.linalg.norm(q)) < 1e-12:
            raise DomainError("lattice point too close to the singularity q=0")

    def hd_env(self, t: float, h: float, q, pp) -> dict[str, float]:
        q = np.asarray(q, dtype=float)
        self._guard(q)
        env = self._params()
        env["t"] = float(t)
        env["hp"] = float(h)
        env.update(zip(qnames(self.n), q.tolist()))
        env.update(zip(ppnames(self.n), np.asarray(pp, dtype=float).tolist()))
        return env

    def point_env(self, pt: LatticePoint) -> dict[str, float]:
        self._guard(pt.q)
        env = self._params()
        env.update(pt.bindings())
        return env


class _Hd:
    """Value and gradient of ``Hd`` at one interval, with index helpers."""

    def __init__(self, sys: DiscreteSystem, t: float, h: float, q, pp, second: bool = False):
        self.sys = sys
        self.h = h
        self.env = sys.hd_env(t, h, q, pp)
        n = sys.n
        self.val, self.g, self.hess = sys.derivatives(self.env, second)
        self.T, self.HP = 0, 1
        self.Q = slice(2, 2 + n)
        self.PP = slice(2 + n, 2 + 2 * n)

    @property
    def dt_first(self) -> float:
        return float(self.g[self.T] - self.g[self.HP])

    @property
    def dt_second(self) -> float:
        return float(self.g[self.HP])

    @property
    def dq(self) -> np.ndarray:
        return self.g[self.Q]

    @property
    def dpp(self) -> np.ndarray:
        return self.g[self.PP]


def _forward(sys, cur: LatticePoint, nxt: LatticePoint, second=False) -> _Hd:
    return _Hd(sys, cur.t, interval(cur, nxt), cur.q, nxt.p, second)


def _backward(sys, prev: LatticePoint, cur: LatticePoint) -> _Hd:
    return _Hd(sys, prev.t, interval(prev, cur), prev.q, cur.p)


def step_residuals(
    sys: DiscreteSystem, prev: LatticePoint, cur: LatticePoint, nxt: LatticePoint
) -> np.ndarray:
    """The ``2n + 1`` discrete Hamiltonian equations at node ``cur``."""
    if not prev.t < cur.t < nxt.t:
        raise ValueError("lattice times must be strictly increasing")
    fwd = _forward(sys, cur, nxt)
    bwd = _backward(sys, prev, cur)
    h = fwd.h
    r_q = (nxt.q - cur.q) / h - fwd.dpp
    r_p = (nxt.p - cur.p) / h + fwd.dq
    r_lat = h * fwd.dt_first - fwd.val + bwd.h * bwd.dt_second + bwd.val
    return np.concatenate([r_q, r_p, [r_lat]])


# -- Newton ----------------------------------------------------------------------


@dataclass
class NewtonResult:
    x: np.ndarray
    iterations: int
    history: list[float]
    jacobian: np.ndarray | None = None  # last Jacobian formed, near x


def _scaled_cond(J: np.ndarray) -> float:
    """Condition number after row and column equilibration, so that a
    Jacobian is not called singular merely because its units differ."""
    rows = np.max(np.abs(J), axis=1)
    if not np.all(rows > 0):
        return np.inf
    Js = J / rows[:, None]
    cols = np.max(np.abs(Js), axis=0)
    if not np.all(cols > 0):
        return np.inf
    try:
        return float(np.linalg.cond(Js / cols))
    except np.linalg.LinAlgError:
        return np.inf


def _newton(fun, jac, x0, tol=NEWTON_TOL, max_iter=NEWTON_MAX_ITER,
            max_halvings=NEWTON_MAX_HALVINGS, admissible=None, polish=True) -> NewtonResult:
    x = np.asarray(x0, dtype=float)
    f = fun(x)
    norm = float(np.max(np.abs(f)))
    history = [norm]
    it = 0
    J = None
    while norm > tol:
        if it >= max_iter:
            raise NewtonError(f"no convergence after {max_iter} iterations (residual {norm:.3g})")
        J = jac(x)
        cond = _scaled_cond(J)
        if not np.isfinite(cond) or cond > MAX_COND:
            raise SingularJacobianError("singular Newton Jacobian", cond)
        dx = np.linalg.solve(J, -f)
        lam = 1.0
        for _ in range(max_halvings + 1):
            trial = x + lam * dx
            if admissible is None or admissible(trial):
                try:
                    f_trial = fun(trial)
                    n_trial = float(np.max(np.abs(f_trial)))
                except EvalError:
                    n_trial = np.inf
                if n_trial < norm:
                    break
            lam *= 0.5
        else:
            raise NewtonError(f"damped Newton step failed to reduce residual {norm:.3g}")
        x, f, norm = trial, f_trial, n_trial
        it += 1
        history.append(norm)
    if polish and it > 0 and norm > 0.0:
        # one extra undamped iteration drives the residual to round-off
        try:
            J = jac(x)
            trial = x + np.linalg.solve(J, -f)
            if admissible is None or admissible(trial):
                n_trial = float(np.max(np.abs(fun(trial))))
                if n_trial <= norm:
                    x, norm = trial, n_trial
                    history.append(norm)
        except (np.linalg.LinAlgError, EvalError):
            pass
    return NewtonResult(x, it, history, J)


def _first_block(sys: DiscreteSystem, cur: LatticePoint, h: float, x: np.ndarray, second: bool):
    n = sys.n
    q_next, pp = x[:n], x[n:]
    fwd = _Hd(sys, cur.t, h, cur.q, pp, second)
    r = np.concatenate([(q_next - cur.q) / h - fwd.dpp, (pp - cur.p) / h + fwd.dq])
    return fwd, r


def _euler_guess(sys: DiscreteSystem, cur: LatticePoint, h: float) -> np.ndarray:
    hd = _Hd(sys, cur.t, h, cur.q, cur.p)
    return np.concatenate([cur.q + h * hd.dpp, cur.p - h * hd.dq])


def _solve_fixed_step(sys, cur: LatticePoint, h: float, tol=NEWTON_TOL) -> NewtonResult:
    n = sys.n
    eye = np.eye(n)

    def fun(x):
        return _first_block(sys, cur, h, x, False)[1]

    def jac(x):
        fwd, _ = _first_block(sys, cur, h, x, True)
        H = fwd.hess
        top = np.hstack([eye / h, -H[fwd.PP, fwd.PP]])
        bottom = np.hstack([np.zeros((n, n)), eye / h + H[fwd.Q, fwd.PP]])
        return np.vstack([top, bottom])

    return _newton(fun, jac, _euler_guess(sys, cur, h), tol=tol)


def step_first(sys: DiscreteSystem, p0: LatticePoint, h0: float, tol: float = NEWTON_TOL,
               *, return_info: bool = False):
    """First lattice step with the step size ``h0`` prescribed.

    Only the first ``2n`` equations are solved; the lattice equation needs
    two intervals and takes over from the second step on.
    """
    if h0 <= 0:
        raise ValueError("h0 must be positive")
    res = _solve_fixed_step(sys, p0, h0, tol)
    n = sys.n
    pt = LatticePoint(p0.t + h0, res.x[:n], res.x[n:], h0)
    return (pt, res) if return_info else pt


class _FullStep:
    """Residual and Jacobian of all ``2n + 1`` equations in ``(h+, q+, p+)``."""

    def __init__(self, sys: DiscreteSystem, prev: LatticePoint, cur: LatticePoint):
        self.sys, self.prev, self.cur = sys, prev, cur
        bwd = _backward(sys, prev, cur)
        self.h_minus = bwd.h
        self.const = bwd.h * bwd.dt_second + bwd.val

    def split(self, x):
        n = self.sys.n
        return x[0], x[1 : n + 1], x[n + 1 :]

    def fun(self, x):
        h, q_next, pp = self.split(x)
        fwd = _Hd(self.sys, self.cur.t, h, self.cur.q, pp)
        return np.concatenate([
            (q_next - self.cur.q) / h - fwd.dpp,
            (pp - self.cur.p) / h + fwd.dq,
            [h * fwd.dt_first - fwd.val + self.const],
        ])

    def jac(self, x):
        n = self.sys.n
        h, q_next, pp = self.split(x)
        fwd = _Hd(self.sys, self.cur.t, h, self.cur.q, pp, second=True)
        H, g = fwd.hess, fwd.g
        T, HP, Q, PP = fwd.T, fwd.HP, fwd.Q, fwd.PP
        eye = np.eye(n)
        J = np.zeros((2 * n + 1, 2 * n + 1))
        qs, ps = slice(1, n + 1), slice(n + 1, 2 * n + 1)
        J[:n, 0] = -(q_next - self.cur.q) / h**2 - H[PP, HP]
        J[:n, qs] = eye / h
        J[:n, ps] = -H[PP, PP]
        J[n : 2 * n, 0] = -(pp - self.cur.p) / h**2 + H[Q, HP]
        J[n : 2 * n, ps] = eye / h + H[Q, PP]
        J[2 * n, 0] = (g[T] - g[HP]) + h * (H[T, HP] - H[HP, HP]) - g[HP]
        J[2 * n, ps] = h * (H[T, PP] - H[HP, PP]) - g[PP]
        return J

    def lattice_sensitivity(self, x, J=None) -> tuple[float, float]:
        """Total derivative of the lattice residual in ``h+`` along the
        manifold where the first ``2n`` equations hold, and its scale."""
        if J is None:
            J = self.jac(x)
        A, b = J[:-1, 1:], J[:-1, 0]
        c, d = J[-1, 1:], J[-1, 0]
        try:
            coupled = float(c @ np.linalg.solve(A, b))
        except np.linalg.LinAlgError:
            return 0.0, 0.0
        return d - coupled, max(abs(d), abs(coupled))


@dataclass
class StepInfo:
    iterations: int
    residual_norm: float
    history: list[float]
    degenerate: bool = False


def _is_degenerate(full: _FullStep, x, J=None) -> bool:
    total, scale = full.lattice_sensitivity(x, J)
    return abs(total) <= DEGENERATE_RTOL * scale


def _fallback(sys, prev, cur, full: _FullStep, tol) -> tuple[LatticePoint, StepInfo] | None:
    """Solve with ``h+ = h-`` and accept it if the lattice equation is
    degenerate there."""
    h = full.h_minus
    res = _solve_fixed_step(sys, cur, h, tol)
    x = np.concatenate([[h], res.x])
    if not _is_degenerate(full, x):
        return None
    n = sys.n
    log.debug("degenerate lattice equation at t=%.6g; using h+ = h- = %.6g", cur.t, h)
    pt = LatticePoint(cur.t + h, res.x[:n], res.x[n:], h)
    return pt, StepInfo(res.iterations, res.history[-1], res.history, degenerate=True)


def step(sys: DiscreteSystem, prev: LatticePoint, cur: LatticePoint, tol: float = NEWTON_TOL,
         *, return_info: bool = False):
    """Advance one node, solving for ``(h+, q+, p+)`` by damped Newton.

    Starts from ``h+ = h-`` and an explicit Euler predictor.  When the
    lattice equation does not determine ``h+`` (its reduced derivative in
    ``h+`` vanishes) the step falls back to ``h+ = h-`` and is flagged.
    """
    full = _FullStep(sys, prev, cur)
    h_minus = full.h_minus
    if h_minus <= 0:
        raise ValueError("lattice times must be strictly increasing")
    x0 = np.concatenate([[h_minus], _euler_guess(sys, cur, h_minus)])
    try:
        res = _newton(full.fun, full.jac, x0, tol=tol, admissible=lambda x: x[0] > 0)
    except NewtonError:
        out = _fallback(sys, prev, cur, full, tol)
        if out is None:
            raise
    else:
        if _is_degenerate(full, res.x, res.jacobian):
            out = _fallback(sys, prev, cur, full, tol)
            if out is None:
                raise NumericalError("lattice equation degenerate at the Newton solution")
        else:
            h, q_next, pp = full.split(res.x)
            out = (
                LatticePoint(cur.t + h, q_next, pp, h),
                StepInfo(res.iterations, res.history[-1], res.history),
            )
    return out if return_info else out[0]


# -- trajectories -------------------------------------------------------------------


class LatticeStepError(NumericalError):
    """A step failed; ``index`` is the node that could not be computed."""

    def __init__(self, index: int, trajectory: "LatticeTrajectory", cause: Exception):
        super().__init__(f"step to node {index} failed: {cause}")
        self.index = index
        self.trajectory = trajectory
        self.cause = cause


@dataclass
class LatticeTrajectory:
    """Nodes of a lattice solution with per-node Newton diagnostics.

    Diagnostics at index ``k`` describe the solve that produced node ``k``;
    index 0 is the initial point (0 iterations, zero residual).
    """

    system: DiscreteSystem
    points: list[LatticePoint] = field(default_factory=list)
    iterations: list[int] = field(default_factory=list)
    residual_norms: list[float] = field(default_factory=list)
    histories: list[list[float]] = field(default_factory=list)
    degenerate: list[bool] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.points)

    def append(self, pt: LatticePoint, info: StepInfo | None) -> None:
        self.points.append(pt)
        if info is None:
            info = StepInfo(0, 0.0, [0.0])
        self.iterations.append(info.iterations)
        self.residual_norms.append(info.residual_norm)
        self.histories.append(info.history)
        self.degenerate.append(info.degenerate)

    @property
    def times(self) -> np.ndarray:
        return np.array([pt.t for pt in self.points])

    @property
    def steps(self) -> np.ndarray:
        """Step sizes ``h_k`` for ``k >= 1``."""
        return np.array([interval(a, b) for a, b in zip(self.points, self.points[1:])])

    def q(self) -> np.ndarray:
        return np.array([pt.q for pt in self.points])

    def p(self) -> np.ndarray:
        return np.array([pt.p for pt in self.points])


def run_lattice(sys: DiscreteSystem, p0: LatticePoint, h0: float, steps: int,
                tol: float = NEWTON_TOL) -> LatticeTrajectory:
    """``step_first`` followed by ``steps - 1`` full lattice steps.

    Parameters derived from ``h0`` are bound before stepping; the returned
    trajectory carries the bound system.
    """
    if steps < 1:
        raise ValueError("steps must be at least 1")
    if sys.derived or "h0" not in sys.params:
        sys = sys.with_step(h0)
    traj = LatticeTrajectory(sys)
    traj.append(p0, None)
    try:
        pt, res = step_first(sys, p0, h0, tol, return_info=True)
    except (NumericalError, EvalError) as exc:
        raise LatticeStepError(1, traj, exc) from exc
    traj.append(pt, StepInfo(res.iterations, res.history[-1], res.history))
    for k in range(2, steps + 1):
        try:
            pt, info = step(sys, traj.points[-2], traj.points[-1], tol, return_info=True)
        except (NumericalError, EvalError) as exc:
            raise LatticeStepError(k, traj, exc) from exc
        traj.append(pt, info)
    return traj


# -- symmetries and first integrals -----------------------------------------------------


def _coeffs(sys: DiscreteSystem, sym: Symmetry, pt: LatticePoint):
    env = sys.point_env(pt)
    xi = float(evaluate(sym.xi, env))
    eta = np.array([float(evaluate(e, env)) for e in sym.eta])
    zeta = np.array([float(evaluate(z, env)) for z in sym.zeta])
    V = float(evaluate(sym.V, env)) if sym.V is not None else 0.0
    return xi, eta, zeta, V


def discrete_first_integral_value(sys: DiscreteSystem, sym: Symmetry,
                                  prev: LatticePoint, cur: LatticePoint) -> float:
    """``eta.p - xi (Hd- + h- dHd-/dt_2) - V`` at ``cur``."""
    sys.check_symmetry(sym)
    xi, eta, _, V = _coeffs(sys, sym, cur)
    bwd = _backward(sys, prev, cur)
    return float(eta @ cur.p - xi * (bwd.val + bwd.h * bwd.dt_second) - V)


def discrete_energy(sys: DiscreteSystem, prev: LatticePoint, cur: LatticePoint,
                    nxt: LatticePoint | None = None, tol: float = NEWTON_TOL) -> float:
    """Discrete energy ``Hd- + h- dHd-/dh-`` for a time-free ``Hd``.

    With ``nxt`` given, the forward form ``Hd + h+ dHd/dh+`` is computed as
    well and the two must agree to ``tol``.
    """
    if not sys.time_invariant:
        raise ConfigError("discrete Hamiltonian is not time-translation invariant")
    bwd = _backward(sys, prev, cur)
    energy = bwd.val + bwd.h * bwd.dt_second
    if nxt is not None:
        fwd = _forward(sys, cur, nxt)
        forward = fwd.val + fwd.h * fwd.dt_second
        slack = 8 * np.finfo(float).eps * max(abs(energy), abs(forward), 1.0)
        if abs(forward - energy) > tol + slack:
            raise NumericalError(
                f"backward and forward energies differ by {abs(forward - energy):.3g}"
            )
    return float(energy)


def _action_terms(sys, sym, cur, nxt, fwd: _Hd, c0, c1, with_v: bool) -> list[float]:
    xi, eta, _, V = c0
    xi1, eta1, zeta1, V1 = c1
    h = fwd.h
    terms = list(zeta1 * (nxt.q - cur.q) / h)
    terms += list(nxt.p * (eta1 - eta) / h)
    terms += [-xi * fwd.g[fwd.T], -(xi1 - xi) * fwd.g[fwd.HP]]
    terms += list(-eta * fwd.dq) + list(-zeta1 * fwd.dpp)
    terms.append(-fwd.val * (xi1 - xi) / h)
    if with_v and sym.V is not None:
        terms.append(-(V1 - V) / h)
    return [float(x) for x in terms]


def discrete_invariance_residual(sys: DiscreteSystem, sym: Symmetry, prev: LatticePoint,
                                 cur: LatticePoint, nxt: LatticePoint,
                                 with_v: bool = True) -> tuple[Residual, Residual]:
    """``(action, mesh)`` invariance residuals at a solution triple.

    ``action`` is the invariance expression of the discrete action (minus
    ``D+(V)`` when the symmetry carries a divergence function); ``mesh`` is
    the prolonged generator applied to the lattice equation.
    """
    sys.check_symmetry(sym)
    c_prev = _coeffs(sys, sym, prev)
    c_cur = _coeffs(sys, sym, cur)
    c_next = _coeffs(sys, sym, nxt)
    fwd = _forward(sys, cur, nxt)
    action = Residual(_action_terms(sys, sym, cur, nxt, fwd, c_cur, c_next, with_v))

    n = sys.n
    xi_m, eta_m = c_prev[0], c_prev[1]
    xi, zeta = c_cur[0], c_cur[2]
    xi_p, zeta_p = c_next[0], c_next[2]
    eta = c_cur[1]

    def xdir(xi0, xi1, eta0, zeta1):
        d = {"t": xi0, "hp": xi1 - xi0}
        d.update(zip(qnames(n), eta0))
        d.update(zip(ppnames(n), zeta1))
        return d

    h_p = interval(cur, nxt)
    h_m = interval(prev, cur)
    env_p = sys.hd_env(cur.t, h_p, cur.q, nxt.p)
    env_m = sys.hd_env(prev.t, h_m, prev.q, cur.p)
    _, G, XH, XG = directional2(sys.Hd, env_p, {"t": 1.0, "hp": -1.0}, xdir(xi, xi_p, eta, zeta_p))
    _, Hm_h, XHm, XHm_h = directional2(sys.Hd, env_m, {"hp": 1.0}, xdir(xi_m, xi, eta_m, zeta))
    mesh = Residual([
        (xi_p - xi) * G,
        h_p * XG,
        -XH,
        (xi - xi_m) * Hm_h,
        h_m * XHm_h,
        XHm,
    ])
    return action, mesh


def discrete_equation_invariance_residuals(
    sys: DiscreteSystem, sym: Symmetry, prev: LatticePoint, cur: LatticePoint,
    nxt: LatticePoint, eps: float = 1e-5,
) -> np.ndarray:
    """Derivative of :func:`step_residuals` along the symmetry flow.

    At a solution triple this vanishes (up to the ``O(eps^2)`` central
    difference error) when the generator is admitted by the discrete
    equations, whether or not it leaves the action invariant.
    """
    sys.check_symmetry(sym)
    pts = (prev, cur, nxt)
    coeffs = [_coeffs(sys, sym, pt) for pt in pts]

    def moved(sign: float):
        out = []
        for k, (pt, (xi, eta, zeta, _)) in enumerate(zip(pts, coeffs)):
            h = None
            if k > 0:
                h = interval(pts[k - 1], pt) + sign * eps * (xi - coeffs[k - 1][0])
            out.append(LatticePoint(pt.t + sign * eps * xi, pt.q + sign * eps * eta,
                                    pt.p + sign * eps * zeta, h))
        return step_residuals(sys, *out)

    return (moved(1.0) - moved(-1.0)) / (2 * eps)


def check_discrete_identity(sys: DiscreteSystem, sym: Symmetry, prev: LatticePoint,
                            cur: LatticePoint, nxt: LatticePoint) -> Residual:
    """Mismatch of the two sides of the discrete Hamiltonian identity.

    Holds for arbitrary increasing triples; no solution requirement.
    """
    sys.check_symmetry(sym)
    if not prev.t < cur.t < nxt.t:
        raise ValueError("lattice times must be strictly increasing")
    c_cur = _coeffs(sys, sym, cur)
    c_next = _coeffs(sys, sym, nxt)
    fwd = _forward(sys, cur, nxt)
    bwd = _backward(sys, prev, cur)
    lhs = _action_terms(sys, sym, cur, nxt, fwd, c_cur, c_next, with_v=False)

    xi, eta = c_cur[0], c_cur[1]
    xi1, eta1, zeta1 = c_next[0], c_next[1], c_next[2]
    h, hm = fwd.h, bwd.h
    rhs = [
        xi * (fwd.val - bwd.val) / h,
        -xi * fwd.dt_first,
        -xi * (hm / h) * bwd.dt_second,
    ]
    rhs += list(-eta * ((nxt.p - cur.p) / h + fwd.dq))
    rhs += list(zeta1 * ((nxt.q - cur.q) / h - fwd.dpp))
    bracket = float(eta @ cur.p - xi * (bwd.val + hm * bwd.dt_second))
    bracket_next = float(eta1 @ nxt.p - xi1 * (fwd.val + h * fwd.dt_second))
    rhs.append((bracket_next - bracket) / h)
    return Residual.difference(lhs, [float(x) for x in rhs])


def integral_bindings(sys: DiscreteSystem, prev: LatticePoint, cur: LatticePoint) -> dict[str, float]:
    """Bindings for closed-form discrete integrals: node values plus ``hm``
    and ``qm*`` from the previous node."""
    env = sys.point_env(cur)
    env["hm"] = interval(prev, cur)
    env.update(zip(qmnames(sys.n), prev.q.tolist()))
    return env
