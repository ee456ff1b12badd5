"""End-to-end acceptance checks.

Each check returns ``(passed, detail)``.  Under pytest every check is also a
test; the collected PASS/FAIL lines are printed in the terminal summary (see
conftest.py).  Running this file directly prints the same lines.
"""

from __future__ import annotations

import time

import numpy as np
import pytest

from hamsym import checks, systems
from hamsym.autodiff import grad
from hamsym.continuous import (
    FirstIntegral,
    State,
    equation_invariance_residuals,
    integrate_reference,
    invariance_residual,
    monitor,
)
from hamsym.discrete import LatticeStepError, run_lattice, step_residuals
from hamsym.expr import evaluate, parse

RESULTS: dict[int, tuple[bool, str, str]] = {}

CONTINUOUS = [cid for cid in systems.list_ids() if systems.get(cid).kind == "continuous"]
DISCRETE = [cid for cid in systems.list_ids() if systems.get(cid).kind == "discrete"]


def record(num: int, title: str):
    def wrap(fn):
        def run():
            if num not in RESULTS:
                ok, detail = fn()
                RESULTS[num] = (bool(ok), title, detail)
            return RESULTS[num]

        run.num = num
        return run

    return wrap


def summary_lines() -> list[str]:
    return [f"{'PASS' if ok else 'FAIL'} [{num}] {title}: {detail}"
            for num, (ok, title, detail) in sorted(RESULTS.items())]


# -- 1 -------------------------------------------------------------------------------


@record(1, "Hamiltonian identity, continuous and discrete")
def identity_suites():
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst = {cid: checks.identity_max(systems.get(cid), 1000, rng) for cid in CONTINUOUS + DISCRETE}
    elapsed = time.perf_counter() - start
    top = max(worst.values())
    return top <= 1e-10 and elapsed < 5.0, f"max residual {top:.2e}, {elapsed:.2f} s"


# -- 2 -------------------------------------------------------------------------------


@record(2, "cubic system verdicts and connecting relation")
def cubic():
    entry = systems.get("cubic")
    reports = {r.symmetry: r for r in checks.verify_entry(entry, 200, np.random.default_rng(2))}
    verdicts = {k: r.verdict for k, r in reports.items()}
    want = {"X1": "invariant", "X2": "invariant", "X3": "divergence-invariant"}
    traj = integrate_reference(entry.system, State(0.0, np.array([1.0]), np.array([1.0])), 5.0, 1e-3)
    worst = max(abs(v - tg) for s in traj for v, tg in entry.relation_values(s).values())
    ok = verdicts == want and worst <= 1e-8
    return ok, f"verdicts {verdicts}, max |4 I1 I3 - I2^2 - 1| = {worst:.2e}"


# -- 3 -------------------------------------------------------------------------------


@record(3, "Coulomb: one invariant symmetry, X2 still admitted")
def coulomb():
    entry = systems.get("coulomb")
    rng = np.random.default_rng(3)
    reports = checks.verify_entry(entry, 200, rng)
    invariant = [r.symmetry for r in reports if r.verdict == "invariant"]
    x2 = entry.symmetry("X2")
    worst = 0.0
    for s in checks.sample_states(entry, 100, rng):
        a, b = equation_invariance_residuals(entry.system, x2, s)
        worst = max(worst, float(np.max(np.abs(np.concatenate([a, b])))))
    ok = invariant == ["X1"] and worst <= 1e-9
    return ok, f"invariant {invariant}, X2 equation residual {worst:.2e}"


# -- 4 -------------------------------------------------------------------------------


def random_bound_state(rng) -> State:
    """Non-planar bound orbit with perihelion >= 0.3 and period <= 15."""
    while True:
        r = rng.uniform(0.8, 1.2)
        q = rng.normal(size=3)
        q *= r / np.linalg.norm(q)
        v = np.sqrt(2 / r * rng.uniform(0.35, 0.65))
        p = rng.normal(size=3)
        p *= v / np.linalg.norm(p)
        energy = 0.5 * v * v - 1 / r
        a = -1 / (2 * energy)
        L = np.cross(q, p)
        ecc = np.sqrt(max(0.0, 1 + 2 * energy * (L @ L)))
        if a * (1 - ecc) >= 0.3 and 2 * np.pi * a**1.5 <= 15 and min(abs(L)) > 0.05:
            return State(0.0, q, p)


def period(state: State) -> float:
    energy = 0.5 * state.p @ state.p - 1 / np.linalg.norm(state.q)
    return 2 * np.pi * (-1 / (2 * energy)) ** 1.5


@record(4, "Kepler: Runge-Lenz relations over one orbit, X1 not a symmetry of the action")
def kepler():
    entry = systems.get("kepler3d")
    rng = np.random.default_rng(4)
    rel_a = rel_dot = 0.0
    for _ in range(3):
        s0 = random_bound_state(rng)
        for s in integrate_reference(entry.system, s0, period(s0), 1e-3):
            rel = entry.relation_values(s)
            rel_a = max(rel_a, abs(rel["A2-2HL2"][0] - rel["A2-2HL2"][1]))
            rel_dot = max(rel_dot, abs(rel["A.L"][0]))
    x1 = entry.symmetry("X1")
    res = [abs(float(invariance_residual(entry.system, x1, s, with_v=False)))
           for s in checks.sample_states(entry, 200, rng)]
    generic = float(np.median(res))
    share = float(np.mean(np.array(res) > 1e-3))
    ok = rel_a <= 1e-7 and rel_dot <= 1e-8 and share >= 0.95
    return ok, (f"max |A^2-2HL^2-1| {rel_a:.2e}, max |A.L| {rel_dot:.2e}, "
                f"X1 residual median {generic:.3f} (>1e-3 at {share:.0%} of states)")


# -- 5 -------------------------------------------------------------------------------


def midpoint_run():
    entry = systems.get("osc-midpoint")
    return entry, run_lattice(entry.system, entry.initial_state(), 0.2, 10_000)


@record(5, "midpoint oscillator, 1e4 steps")
def midpoint():
    entry, traj = midpoint_run()
    sys_ = traj.system
    h_dev = float(np.max(np.abs(traj.steps - 0.2)))
    pts = traj.points
    vals = [entry.integral_values(a, b, system=sys_) for a, b in zip(pts, pts[1:])]
    drift = max(abs(v[k] - vals[0][k]) for v in vals for k in ("I1", "I2"))
    circle = max(abs(v["I1"] ** 2 + v["I2"] ** 2 - (b.q[0] ** 2 + b.p[0] ** 2))
                 for v, b in zip(vals, pts[1:]))
    first = np.array([pts[1].q[0], pts[1].p[0]])
    first_err = float(np.max(np.abs(first - [0.980198019801980, -0.198019801980198])))
    ok = h_dev <= 1e-12 and drift <= 1e-8 and circle <= 1e-10 and first_err <= 1e-12
    return ok, (f"max |h-0.2| {h_dev:.2e}, integral drift {drift:.2e}, "
                f"circle {circle:.2e}, first step error {first_err:.2e}")


# -- 6 -------------------------------------------------------------------------------


@record(6, "exact oscillator matches the flow, 1e3 steps")
def exact():
    entry = systems.get("osc-exact")
    traj = run_lattice(entry.system, entry.initial_state(), 0.2, 1000)
    pts = traj.points
    ints = entry.integral_values(pts[0], pts[1], system=traj.system)
    i1, i2 = ints["I1"], ints["I2"]
    dev = 0.0
    for pt in pts:
        q = i2 * np.sin(pt.t) - i1 * np.cos(pt.t)
        p = i1 * np.sin(pt.t) + i2 * np.cos(pt.t)
        dev = max(dev, abs(pt.q[0] - q), abs(pt.p[0] - p))
    return dev <= 1e-10, f"max deviation {dev:.2e} up to t={pts[-1].t:.6g}"


# -- 7 -------------------------------------------------------------------------------


@record(7, "nonlinear lattice, 1e3 steps from (1, 1)")
def nonlinear():
    entry = systems.get("nonlinear")
    try:
        traj = run_lattice(entry.system, entry.initial_state(), 0.1, 1000)
        failure = None
    except LatticeStepError as exc:
        traj, failure = exc.trajectory, exc
    sys_ = traj.system
    pts = traj.points
    rel = max((abs(v - tg) for a, b in zip(pts, pts[1:])
               for name, (v, tg) in entry.relation_values(a, b, system=sys_).items()
               if name == "I2-qp-2tI1"), default=0.0)
    lat = max((abs(step_residuals(sys_, *pts[k - 1:k + 2])[-1]) for k in range(1, len(pts) - 1)),
              default=0.0)
    reached = len(pts) - 1
    detail = (f"reached node {reached} of 1000 (t={pts[-1].t:.3e}, h={pts[-1].h:.3e}); "
              f"on those nodes relation {rel:.2e}, lattice residual {lat:.2e}")
    if failure is not None:
        detail += f"; {failure}"
    return failure is None and rel <= 1e-9 and lat <= 1e-12, detail


# -- 8 -------------------------------------------------------------------------------

VARS = ("x", "y", "z")


def random_expr(rng, depth: int = 0) -> str:
    if depth >= 3 or rng.random() < 0.25:
        return str(VARS[rng.integers(3)]) if rng.random() < 0.7 else f"{rng.uniform(0.5, 2):.3f}"
    kind = rng.integers(8)
    a = random_expr(rng, depth + 1)
    if kind < 4:
        b = random_expr(rng, depth + 1)
        return f"({a} {'+-*'[kind % 3]} {b})" if kind < 3 else f"({a}) / (2 + ({b})^2)"
    return [f"sin({a})", f"cos({a})", f"exp(0.3*sin({a}))", f"sqrt(1 + ({a})^2)"][kind - 4]


@record(8, "forward-mode gradient vs central differences")
def ad_vs_fd():
    rng = np.random.default_rng(8)
    worst, eps = 0.0, 1e-6
    for _ in range(500):
        e = parse(random_expr(rng))
        point = dict(zip(VARS, rng.uniform(-1.5, 1.5, 3)))
        g = grad(e, point, VARS)
        for i, v in enumerate(VARS):
            up, dn = dict(point), dict(point)
            up[v] += eps
            dn[v] -= eps
            fd = (evaluate(e, up) - evaluate(e, dn)) / (2 * eps)
            worst = max(worst, abs(g[i] - fd) / max(1.0, abs(fd)))
    return worst <= 1e-6, f"max relative error {worst:.2e} over 500 pairs"


# -- 9 -------------------------------------------------------------------------------


def drift_ratios(entry, s0: State, t_end: float, dt: float) -> dict[str, float]:
    ints = [FirstIntegral.from_expr(entry.system, k, e) for k, e in entry.integrals.items()]
    coarse = monitor(integrate_reference(entry.system, s0, t_end, dt), ints)
    fine = monitor(integrate_reference(entry.system, s0, t_end, dt / 2), ints)
    return {k: coarse[k] / fine[k] for k in coarse}


@record(9, "RK4 drift ratio under dt halving")
def order():
    ratios = drift_ratios(systems.get("cubic"), State(0.0, np.array([1.0]), np.array([1.0])), 5.0, 0.05)
    s0 = State(0.0, np.array([1.0, 0.0, 0.2]), np.array([0.0, 1.1, 0.3]))
    ratios.update({f"kepler:{k}": v for k, v in
                   drift_ratios(systems.get("kepler3d"), s0, period(s0), 0.05).items()})
    lo, hi = min(ratios.values()), max(ratios.values())
    return 8 <= lo and hi <= 32, f"ratios in [{lo:.2f}, {hi:.2f}] over {len(ratios)} integrals"


CHECKS = [identity_suites, cubic, coulomb, kepler, midpoint, exact, nonlinear, ad_vs_fd, order]


@pytest.mark.parametrize("check", CHECKS, ids=[f"c{c.num}" for c in CHECKS])
def test_acceptance(check):
    ok, title, detail = check()
    assert ok, f"{title}: {detail}"


if __name__ == "__main__":
    for check in CHECKS:
        check()
    print("\n".join(summary_lines()))
