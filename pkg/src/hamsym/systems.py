"""Built-in catalog of worked example systems.

Each :class:`CatalogEntry` bundles a continuous or discrete system with its
known symmetries, the expected behaviour of each symmetry, closed-form first
integrals and algebraic relations between them.  The test-suite and the
``verify`` command are driven by this metadata.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .continuous import ContinuousSystem, State, Symmetry, _check_vars, qnames, pnames
from .discrete import DiscreteSystem, LatticePoint, integral_bindings
from .errors import ConfigError
from .expr import Expr, as_expr, evaluate

EXPECTATIONS = ("invariant", "divergence_invariant", "admitted_only", "not_noether")

System = Union[ContinuousSystem, DiscreteSystem]


@dataclass(frozen=True)
class Relation:
    """``expr`` should equal ``target`` on solutions.

    ``expr`` may use integral names, state variables and parameters; ``target``
    only parameters.
    """

    name: str
    expr: Expr
    target: Expr

    @classmethod
    def of(cls, name: str, expr, target=0.0) -> "Relation":
        return cls(name, as_expr(expr), as_expr(target))


@dataclass
class CatalogEntry:
    id: str
    kind: str  # "continuous" or "discrete"
    system: System
    symmetries: list[Symmetry]
    expect: dict[str, str]
    integrals: dict[str, Expr] = field(default_factory=dict)
    integral_of: dict[str, str] = field(default_factory=dict)  # integral -> symmetry
    relations: list[Relation] = field(default_factory=list)
    initial: tuple[float, tuple[float, ...], tuple[float, ...]] = (0.0, (1.0,), (0.0,))
    h0: float | None = None
    box: dict[str, tuple[float, float]] = field(default_factory=dict)
    min_radius: float = 0.0

    def __post_init__(self):
        self.integrals = {k: as_expr(v) for k, v in self.integrals.items()}
        names = [s.name for s in self.symmetries]
        for name, flag in self.expect.items():
            if name not in names:
                raise ConfigError(f"{self.id}: expectation for unknown symmetry {name}")
            if flag not in EXPECTATIONS:
                raise ConfigError(f"{self.id}: unknown expectation {flag!r}")
        for integral, sym in self.integral_of.items():
            if integral not in self.integrals or sym not in names:
                raise ConfigError(f"{self.id}: bad integral link {integral} -> {sym}")
        for sym in self.symmetries:
            self.system.check_symmetry(sym)
        if self.kind == "continuous":
            allowed = self.system.allowed_vars
        else:
            allowed = set(self.system.integral_vars) | self.system.param_names
        _check_vars({f"integral {k}": e for k, e in self.integrals.items()}, allowed)
        params = set(self.system.params) | {"h0"} | set(getattr(self.system, "derived", {}))
        for rel in self.relations:
            _check_vars({f"relation {rel.name}": rel.expr}, allowed | set(self.integrals))
            _check_vars({f"relation {rel.name} target": rel.target}, params)

    @property
    def n(self) -> int:
        return self.system.n

    def symmetry(self, name: str) -> Symmetry:
        for sym in self.symmetries:
            if sym.name == name:
                return sym
        raise KeyError(f"{self.id} has no symmetry {name!r}")

    def initial_state(self) -> State:
        t, q, p = self.initial
        if self.kind == "discrete":
            return LatticePoint(t, q, p)
        return State(t, q, p)

    def bound_system(self, h0: float | None = None) -> System:
        """The system with step-dependent parameters bound (discrete only)."""
        if self.kind == "continuous":
            return self.system
        return self.system.with_step(self.h0 if h0 is None else h0)

    # -- closed forms --------------------------------------------------------

    def integral_values(self, *points, system: System | None = None) -> dict[str, float]:
        """Closed-form integrals at a state, or at ``(prev, cur)`` for lattices."""
        sys = system or self.bound_system()
        env = self._env(sys, points)
        return {name: float(evaluate(e, env)) for name, e in self.integrals.items()}

    def relation_values(self, *points, system: System | None = None) -> dict[str, tuple[float, float]]:
        """``name -> (value, target)`` for every relation."""
        sys = system or self.bound_system()
        env = self._env(sys, points)
        env.update(self.integral_values(*points, system=sys))
        out = {}
        for rel in self.relations:
            out[rel.name] = (float(evaluate(rel.expr, env)), float(evaluate(rel.target, sys.params)))
        return out

    def _env(self, sys: System, points) -> dict[str, float]:
        if self.kind == "continuous":
            (s,) = points
            return sys.bindings(s)
        prev, cur = points
        return integral_bindings(sys, prev, cur)

    def sample_point(self, rng: np.random.Generator) -> State:
        """Random state in the sampling box (``|q| >= min_radius``)."""
        n = self.n
        for _ in range(1000):
            t = rng.uniform(*self.box.get("t", (0.0, 0.0)))
            q = rng.uniform(*self.box["q"], size=n)
            p = rng.uniform(*self.box["p"], size=n)
            if np.linalg.norm(q) >= self.min_radius:
                cls = LatticePoint if self.kind == "discrete" else State
                return cls(t, q, p)
        raise RuntimeError("sampling box rejects every draw")


# -- builders ----------------------------------------------------------------------------


def _sym(name, xi, eta, zeta, V=None) -> Symmetry:
    return Symmetry(name, xi, tuple(eta), tuple(zeta), V)


def _dot(a: list[str], b: list[str]) -> str:
    return "(" + " + ".join(f"{x}*{y}" for x, y in zip(a, b)) + ")"


def _kepler(n: int) -> tuple[ContinuousSystem, list[Symmetry], dict[str, str], dict, dict]:
    q, p = qnames(n), pnames(n)
    r = "sqrt(" + " + ".join(f"{x}^2" for x in q) + ")"
    qq, pp, qp = _dot(q, q), _dot(p, p), _dot(q, p)
    H = f"0.5*{pp} - K^2/{r}"
    sys = ContinuousSystem(n, H, params={"K": 1.0}, singular=True)
    syms = [
        _sym("X0", 1, ["0"] * n, ["0"] * n),
        _sym("X1", "3*t", [f"2*{x}" for x in q], [f"-{y}" for y in p]),
    ]
    expect = {"X0": "invariant", "X1": "not_noether"}
    integrals = {"I0": f"-({H})"}
    link = {"I0": "X0"}
    for i in range(n):
        for j in range(i + 1, n):
            name = f"X{i + 1}{j + 1}"
            eta, zeta = ["0"] * n, ["0"] * n
            eta[i], eta[j] = f"-{q[j]}", q[i]
            zeta[i], zeta[j] = f"-{p[j]}", p[i]
            syms.append(_sym(name, 0, eta, zeta))
            expect[name] = "invariant"
            integrals[f"I{i + 1}{j + 1}"] = f"{q[i]}*{p[j]} - {q[j]}*{p[i]}"
            link[f"I{i + 1}{j + 1}"] = name
    for l in range(n):
        eta, zeta = [], []
        for k in range(n):
            # delta_lk terms only on the diagonal
            dqp, dpp, dqq = (f" - {qp}", f" - {pp}", f" - {qq}") if k == l else ("", "", "")
            eta.append(f"2*{q[l]}*{p[k]} - {q[k]}*{p[l]}{dqp}")
            zeta.append(f"{p[l]}*{p[k]}{dpp} - K^2/{r}^3*({q[l]}*{q[k]}{dqq})")
        V = f"{q[l]}*({pp} + K^2/{r}) - {p[l]}*{qp}"
        name = f"Y{l + 1}"
        syms.append(_sym(name, 0, eta, zeta, V))
        expect[name] = "divergence_invariant"
        integrals[f"A{l + 1}"] = f"{q[l]}*({pp} - K^2/{r}) - {p[l]}*{qp}"
        link[f"A{l + 1}"] = name
    return sys, syms, expect, integrals, link


def _cubic() -> CatalogEntry:
    sys = ContinuousSystem(1, "0.5*(p1^2 + 1/q1^2)", singular=True)
    syms = [
        _sym("X1", 1, ["0"], ["0"]),
        _sym("X2", "2*t", ["q1"], ["-p1"]),
        _sym("X3", "t^2", ["t*q1"], ["q1 - t*p1"], "q1^2/2"),
    ]
    return CatalogEntry(
        "cubic", "continuous", sys, syms,
        expect={"X1": "invariant", "X2": "invariant", "X3": "divergence_invariant"},
        integrals={
            "I1": "-0.5*(p1^2 + 1/q1^2)",
            "I2": "p1*q1 - t*(p1^2 + 1/q1^2)",
            "I3": "-0.5*(t^2/q1^2 + (q1 - t*p1)^2)",
        },
        integral_of={"I1": "X1", "I2": "X2", "I3": "X3"},
        relations=[Relation.of("connect", "4*I1*I3 - I2^2", 1)],
        initial=(0.0, (1.0,), (1.0,)),
        box={"t": (-1.0, 1.0), "q": (0.5, 2.0), "p": (-2.0, 2.0)},
    )


def _coulomb() -> CatalogEntry:
    sys = ContinuousSystem(1, "p1^2/2 + 1/q1", singular=True)
    syms = [
        _sym("X1", 1, ["0"], ["0"]),
        _sym("X2", "3*t", ["2*q1"], ["-p1"]),
    ]
    return CatalogEntry(
        "coulomb", "continuous", sys, syms,
        expect={"X1": "invariant", "X2": "admitted_only"},
        integrals={"I1": "-(p1^2/2 + 1/q1)"},
        integral_of={"I1": "X1"},
        initial=(0.0, (1.0,), (1.0,)),
        box={"t": (-1.0, 1.0), "q": (0.5, 3.0), "p": (-2.0, 2.0)},
    )


def _kepler3d() -> CatalogEntry:
    sys, syms, expect, integrals, link = _kepler(3)
    return CatalogEntry(
        "kepler3d", "continuous", sys, syms, expect, integrals, link,
        relations=[
            Relation.of("A2-2HL2", "A1^2 + A2^2 + A3^2 + 2*I0*(I12^2 + I13^2 + I23^2)", "K^4"),
            Relation.of("A.L", "A1*I23 - A2*I13 + A3*I12", 0),
        ],
        initial=(0.0, (1.0, 0.0, 0.2), (0.0, 1.1, 0.3)),
        box={"t": (-1.0, 1.0), "q": (-2.0, 2.0), "p": (-1.0, 1.0)},
        min_radius=0.5,
    )


def _kepler2d() -> CatalogEntry:
    sys, syms, expect, integrals, link = _kepler(2)
    return CatalogEntry(
        "kepler2d", "continuous", sys, syms, expect, integrals, link,
        relations=[Relation.of("A2-2HL2", "A1^2 + A2^2 + 2*I0*I12^2", "K^4")],
        initial=(0.0, (1.0, 0.0), (0.0, 1.2)),
        box={"t": (-1.0, 1.0), "q": (-2.0, 2.0), "p": (-1.0, 1.0)},
        min_radius=0.5,
    )


def _oscillator_symmetries(arg: str) -> list[Symmetry]:
    s, c = f"sin({arg})", f"cos({arg})"
    return [
        _sym("X1", 0, [s], [c], f"q1*{c}"),
        _sym("X2", 0, [c], [f"-{s}"], f"-q1*{s}"),
        _sym("X3", 1, ["0"], ["0"]),
        _sym("X4", 0, ["q1"], ["p1"]),
        _sym("X5", 0, ["p1"], ["-q1"]),
    ]


_OSC_EXPECT = {
    "X1": "divergence_invariant",
    "X2": "divergence_invariant",
    "X3": "invariant",
    "X4": "admitted_only",
    "X5": "admitted_only",
}
_OSC_BOX = {"t": (-1.0, 1.0), "q": (-1.5, 1.5), "p": (-1.5, 1.5), "h": (0.05, 0.4)}


def _osc_midpoint() -> CatalogEntry:
    sys = DiscreteSystem(
        1, "2/(4 - hp^2)*(q1^2 + pp1^2 + hp*q1*pp1)",
        derived={"omega": "atan(h0/2)/(h0/2)"},
    )
    return CatalogEntry(
        "osc-midpoint", "discrete", sys, _oscillator_symmetries("omega*t"), dict(_OSC_EXPECT),
        integrals={
            "I1": "p1*sin(omega*t) - q1*cos(omega*t)",
            "I2": "p1*cos(omega*t) + q1*sin(omega*t)",
            "I3": "-4/(4 - hm^2)*((4 + hm^2)/(4 - hm^2)*(qm1^2 + p1^2)/2"
                  " + 4*hm/(4 - hm^2)*qm1*p1)",
        },
        integral_of={"I1": "X1", "I2": "X2", "I3": "X3"},
        relations=[
            Relation.of("I1^2+I2^2", "I1^2 + I2^2 - (q1^2 + p1^2)", 0),
            Relation.of("I3-simplified", "I3 + 4/(4 + hm^2)*(q1^2 + p1^2)/2", 0),
            Relation.of("step", "hm", "h0"),
        ],
        initial=(0.0, (1.0,), (0.0,)),
        h0=0.2,
        box=dict(_OSC_BOX),
    )


def _osc_exact() -> CatalogEntry:
    sys = DiscreteSystem(
        1, "2*Omega/(4 - Omega^2*hp^2)*(q1^2 + pp1^2 + Omega*hp*q1*pp1)",
        derived={"Omega": "tan(h0/2)/(h0/2)"},
    )
    return CatalogEntry(
        "osc-exact", "discrete", sys, _oscillator_symmetries("t"), dict(_OSC_EXPECT),
        integrals={
            "I1": "p1*sin(t) - q1*cos(t)",
            "I2": "p1*cos(t) + q1*sin(t)",
            "I3": "-4*Omega/(4 - Omega^2*hm^2)*((4 + Omega^2*hm^2)/(4 - Omega^2*hm^2)"
                  "*(qm1^2 + p1^2)/2 + 4*Omega*hm/(4 - Omega^2*hm^2)*qm1*p1)",
        },
        integral_of={"I1": "X1", "I2": "X2", "I3": "X3"},
        relations=[
            Relation.of("I1^2+I2^2", "I1^2 + I2^2 - (q1^2 + p1^2)", 0),
            Relation.of("I3-simplified", "I3 + 4*Omega/(4 + Omega^2*hm^2)*(q1^2 + p1^2)/2", 0),
            Relation.of("step", "hm", "h0"),
        ],
        initial=(0.0, (1.0,), (0.0,)),
        h0=0.2,
        box=dict(_OSC_BOX),
    )


def _nonlinear() -> CatalogEntry:
    sys = DiscreteSystem(1, "0.5*(pp1^2 + 1/q1^2)", singular=True)
    syms = [
        _sym("X1", 1, ["0"], ["0"]),
        _sym("X2", "2*t", ["q1"], ["-p1"]),
    ]
    return CatalogEntry(
        "nonlinear", "discrete", sys, syms,
        expect={"X1": "invariant", "X2": "invariant"},
        integrals={
            "I1": "-0.5*(p1^2 + 1/qm1^2)",
            "I2": "q1*p1 - t*(p1^2 + 1/qm1^2)",
        },
        integral_of={"I1": "X1", "I2": "X2"},
        relations=[Relation.of("I2-qp-2tI1", "I2 - q1*p1 - 2*t*I1", 0)],
        initial=(0.0, (1.0,), (1.0,)),
        h0=0.1,
        box={"t": (0.0, 1.0), "q": (0.5, 2.0), "p": (0.1, 1.5), "h": (0.02, 0.2)},
    )


_BUILDERS = {
    "cubic": _cubic,
    "coulomb": _coulomb,
    "kepler3d": _kepler3d,
    "kepler2d": _kepler2d,
    "osc-midpoint": _osc_midpoint,
    "osc-exact": _osc_exact,
    "nonlinear": _nonlinear,
}
_CACHE: dict[str, CatalogEntry] = {}


def list_ids() -> list[str]:
    return list(_BUILDERS)


def get(id: str) -> CatalogEntry:
    """Catalog entry by id.

    >>> len(get("cubic").symmetries)
    3
    """
    if id not in _BUILDERS:
        raise KeyError(f"unknown catalog id {id!r}; known: {', '.join(_BUILDERS)}")
    if id not in _CACHE:
        _CACHE[id] = _BUILDERS[id]()
    return _CACHE[id]
