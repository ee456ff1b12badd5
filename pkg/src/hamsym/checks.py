"""Randomized verification of symmetries, identities and integrals.

Continuous checks draw states from an entry's sampling box.  Discrete checks
need solution triples ``(prev, cur, next)``: a random start is stepped twice
with a random first step ``h0`` (which also binds any ``h0``-derived
parameters).  Identity checks use arbitrary off-solution data.
"""

from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .autodiff import directional
from .continuous import (
    State,
    Symmetry,
    check_hamiltonian_identity,
    equation_invariance_residuals,
    first_integral_value,
    invariance_residual,
    vector_field,
)
from .discrete import (
    LatticePoint,
    check_discrete_identity,
    discrete_equation_invariance_residuals,
    discrete_first_integral_value,
    discrete_invariance_residual,
    step,
    step_first,
)
from .errors import EvalError, NumericalError
from .systems import CatalogEntry

DEFAULT_TOL = 1e-9
# central differences in discrete_equation_invariance_residuals
DISCRETE_EQUATION_TOL = 1e-6
NOT_NOETHER_MIN_MISFIT = 1e-3
SKIP_BUDGET = 0.10

INVARIANT = "invariant"
DIVERGENCE = "divergence-invariant"
NOT_INVARIANT = "not-invariant"


class SkipBudgetExceeded(NumericalError):
    pass


def _collect(count: int, draw: Callable[[], object]) -> tuple[list, int]:
    """Call ``draw`` until ``count`` successes, skipping evaluation failures
    up to the skip budget."""
    out, skipped = [], 0
    budget = int(SKIP_BUDGET * count)
    while len(out) < count:
        try:
            out.append(draw())
        except (EvalError, NumericalError, ValueError):
            skipped += 1
            if skipped > budget:
                raise SkipBudgetExceeded(
                    f"{skipped} of {len(out) + skipped} samples failed to evaluate"
                ) from None
    return out, skipped


# -- sampling ---------------------------------------------------------------------


def sample_states(entry: CatalogEntry, count: int, rng: np.random.Generator) -> list[State]:
    def draw():
        s = entry.sample_point(rng)
        entry.system.bindings(s)  # singularity guard
        return State(s.t, s.q, s.p)

    return _collect(count, draw)[0]


@dataclass
class Triple:
    system: object
    prev: LatticePoint
    cur: LatticePoint
    next: LatticePoint

    @property
    def points(self):
        return self.prev, self.cur, self.next


def _random_h(entry: CatalogEntry, rng) -> float:
    return float(rng.uniform(*entry.box.get("h", (0.05, 0.2))))


def solution_triple(entry: CatalogEntry, rng: np.random.Generator) -> Triple:
    h0 = _random_h(entry, rng)
    sys = entry.system.with_step(h0)
    p0 = entry.sample_point(rng)
    p1 = step_first(sys, p0, h0)
    p2 = step(sys, p0, p1)
    return Triple(sys, p0, p1, p2)


def arbitrary_triple(entry: CatalogEntry, rng: np.random.Generator) -> Triple:
    """Three unrelated points on an increasing time grid."""
    sys = entry.system.with_step(_random_h(entry, rng))
    a, b, c = (entry.sample_point(rng) for _ in range(3))
    hm, hp = _random_h(entry, rng), _random_h(entry, rng)
    prev = LatticePoint(a.t, a.q, a.p)
    cur = LatticePoint(a.t + hm, b.q, b.p, hm)
    nxt = LatticePoint(cur.t + hp, c.q, c.p, hp)
    return Triple(sys, prev, cur, nxt)


def sample_triples(entry: CatalogEntry, count: int, rng: np.random.Generator,
                   on_solution: bool = True) -> list[Triple]:
    make = solution_triple if on_solution else arbitrary_triple
    return _collect(count, lambda: make(entry, rng))[0]


# -- verdicts ---------------------------------------------------------------------


@dataclass
class SymmetryReport:
    symmetry: str
    verdict: str
    invariance: float  # max relative residual without V
    divergence: float | None  # with V, when the symmetry has one
    mesh: float | None  # discrete only
    equations: float  # max |equation invariance residual|
    samples: int
    expected: str | None = None
    misfit: float | None = None  # not_noether: relative least-squares misfit
    ok: bool | None = None

    def as_dict(self) -> dict:
        return asdict(self)


def _verdict(inv: float, div: float | None, mesh: float | None, tol: float) -> str:
    mesh_ok = mesh is None or mesh <= tol
    if inv <= tol and mesh_ok:
        return INVARIANT
    if div is not None and div <= tol and mesh_ok:
        return DIVERGENCE
    return NOT_INVARIANT


def classify_continuous(entry: CatalogEntry, sym: Symmetry, states: list[State],
                        tol: float = DEFAULT_TOL) -> SymmetryReport:
    sys = entry.system
    inv = div = eq = 0.0
    for s in states:
        inv = max(inv, invariance_residual(sys, sym, s, with_v=False).relative)
        if sym.V is not None:
            div = max(div, invariance_residual(sys, sym, s).relative)
        a, b = equation_invariance_residuals(sys, sym, s)
        eq = max(eq, float(np.max(np.abs(np.concatenate([a, b])))))
    div_out = div if sym.V is not None else None
    return SymmetryReport(sym.name, _verdict(inv, div_out, None, tol), inv, div_out, None, eq,
                          len(states))


def classify_discrete(entry: CatalogEntry, sym: Symmetry, triples: list[Triple],
                      tol: float = DEFAULT_TOL) -> SymmetryReport:
    inv = div = mesh = eq = 0.0
    for tr in triples:
        action, m = discrete_invariance_residual(tr.system, sym, *tr.points, with_v=False)
        inv = max(inv, action.relative)
        mesh = max(mesh, m.relative)
        if sym.V is not None:
            action_v, _ = discrete_invariance_residual(tr.system, sym, *tr.points)
            div = max(div, action_v.relative)
        r = discrete_equation_invariance_residuals(tr.system, sym, *tr.points)
        eq = max(eq, float(np.max(np.abs(r))))
    div_out = div if sym.V is not None else None
    return SymmetryReport(sym.name, _verdict(inv, div_out, mesh, tol), inv, div_out, mesh, eq,
                          len(triples))


def _monomials(names, degree: int) -> list[str]:
    return ["*".join(combo) for d in range(1, degree + 1)
            for combo in itertools.combinations_with_replacement(names, d)]


def divergence_misfit(entry: CatalogEntry, sym: Symmetry, states: list[State],
                      degree: int = 2) -> float:
    """Relative least-squares misfit of the invariance residual by ``D(V)``
    over all polynomials ``V(t, q, p)`` of total degree ``<= degree``.

    A misfit well above round-off shows that no such ``V`` makes ``sym`` a
    divergence symmetry.  This is a bounded check, not a proof over all ``V``.
    """
    sys = entry.system
    names = sys.state_vars
    monomials = _monomials(names, degree)
    if len(states) <= len(monomials):
        raise ValueError(f"need more than {len(monomials)} states for a degree-{degree} fit")
    rows, rhs = [], []
    for s in states:
        qdot, pdot = vector_field(sys, s)
        env = s.bindings()
        tangent = {"t": 1.0, **dict(zip(names[1:], np.concatenate([qdot, pdot])))}
        rows.append([directional(m, env, tangent)[1] for m in monomials])
        rhs.append(float(invariance_residual(sys, sym, s, with_v=False)))
    A, b = np.array(rows), np.array(rhs)
    coef, *_ = np.linalg.lstsq(A, b, rcond=None)
    scale = float(np.linalg.norm(b))
    return float(np.linalg.norm(A @ coef - b)) / scale if scale > 0 else 0.0


def confirm(report: SymmetryReport, expected: str | None, tol: float = DEFAULT_TOL,
            equation_tol: float = DEFAULT_TOL) -> bool | None:
    """Whether ``report`` matches an expectation flag (``None`` if no flag)."""
    report.expected = expected
    if expected is None:
        report.ok = None
    elif expected == "invariant":
        report.ok = report.verdict == INVARIANT
    elif expected == "divergence_invariant":
        report.ok = report.verdict == DIVERGENCE
    elif expected == "admitted_only":
        report.ok = report.verdict == NOT_INVARIANT and report.equations <= equation_tol
    elif expected == "not_noether":
        report.ok = (
            report.verdict == NOT_INVARIANT
            and report.misfit is not None
            and report.misfit > NOT_NOETHER_MIN_MISFIT
        )
    else:
        raise ValueError(f"unknown expectation {expected!r}")
    return report.ok


def verify_entry(entry: CatalogEntry, samples: int, rng: np.random.Generator,
                 tol: float = DEFAULT_TOL) -> list[SymmetryReport]:
    """Classify every symmetry of ``entry`` and confirm its expectation flag."""
    if entry.kind == "continuous":
        states = sample_states(entry, samples, rng)
        reports = []
        for sym in entry.symmetries:
            rep = classify_continuous(entry, sym, states, tol)
            if entry.expect.get(sym.name) == "not_noether":
                # the fit needs comfortably more rows than unknowns
                need = 3 * len(_monomials(entry.system.state_vars, 2))
                extra = sample_states(entry, max(0, need - len(states)), rng)
                rep.misfit = divergence_misfit(entry, sym, states + extra)
            confirm(rep, entry.expect.get(sym.name), tol, tol)
            reports.append(rep)
        return reports
    triples = sample_triples(entry, samples, rng)
    reports = []
    for sym in entry.symmetries:
        rep = classify_discrete(entry, sym, triples, tol)
        confirm(rep, entry.expect.get(sym.name), tol, DISCRETE_EQUATION_TOL)
        reports.append(rep)
    return reports


# -- identities and integrals -----------------------------------------------------------


def identity_max(entry: CatalogEntry, samples: int, rng: np.random.Generator) -> float:
    """Largest relative identity residual over random off-solution draws,
    cycling through the entry's symmetries."""
    worst = 0.0
    syms = entry.symmetries
    if entry.kind == "continuous":
        states = sample_states(entry, samples, rng)
        for k, s in enumerate(states):
            qdot = rng.uniform(-2, 2, entry.n)
            pdot = rng.uniform(-2, 2, entry.n)
            r = check_hamiltonian_identity(entry.system, syms[k % len(syms)], s, qdot, pdot)
            worst = max(worst, r.relative)
        return worst
    for k, tr in enumerate(sample_triples(entry, samples, rng, on_solution=False)):
        r = check_discrete_identity(tr.system, syms[k % len(syms)], *tr.points)
        worst = max(worst, r.relative)
    return worst


def integral_mismatch(entry: CatalogEntry, samples: int, rng: np.random.Generator) -> dict[str, float]:
    """Max relative gap between each linked closed-form integral and the value
    produced from its symmetry."""
    out = {name: 0.0 for name in entry.integral_of}
    if entry.kind == "continuous":
        for s in sample_states(entry, samples, rng):
            closed = entry.integral_values(s)
            for name, sym in entry.integral_of.items():
                v = first_integral_value(entry.system, entry.symmetry(sym), s)
                out[name] = max(out[name], abs(v - closed[name]) / (1 + abs(v)))
        return out
    for tr in sample_triples(entry, samples, rng):
        closed = entry.integral_values(tr.prev, tr.cur, system=tr.system)
        for name, sym in entry.integral_of.items():
            v = discrete_first_integral_value(tr.system, entry.symmetry(sym), tr.prev, tr.cur)
            out[name] = max(out[name], abs(v - closed[name]) / (1 + abs(v)))
    return out
