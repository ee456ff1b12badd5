import numpy as np
import pytest

from hamsym import checks, systems
from hamsym.continuous import Symmetry
from hamsym.errors import ConfigError

IDS = systems.list_ids()


def test_catalog_contents():
    assert set(IDS) == {"cubic", "coulomb", "kepler2d", "kepler3d", "osc-midpoint", "osc-exact", "nonlinear"}
    assert systems.get("cubic") is systems.get("cubic")
    with pytest.raises(KeyError):
        systems.get("pendulum")


@pytest.mark.parametrize("cid", IDS)
def test_expectations_hold(cid):
    entry = systems.get(cid)
    reports = checks.verify_entry(entry, 40, np.random.default_rng(7))
    assert [r.symmetry for r in reports] == [s.name for s in entry.symmetries]
    bad = [(r.symmetry, r.verdict, r.expected) for r in reports if r.ok is False]
    assert not bad


@pytest.mark.parametrize("cid", IDS)
def test_closed_forms_match_symmetry_integrals(cid):
    entry = systems.get(cid)
    mismatch = checks.integral_mismatch(entry, 30, np.random.default_rng(8))
    assert set(mismatch) == set(entry.integral_of)
    assert max(mismatch.values(), default=0.0) <= 1e-12


@pytest.mark.parametrize("cid", ["cubic", "kepler2d", "kepler3d"])
def test_relations_hold_at_random_states(cid, rng):
    entry = systems.get(cid)
    for s in checks.sample_states(entry, 50, rng):
        for name, (value, target) in entry.relation_values(s).items():
            assert value == pytest.approx(target, abs=1e-12), name


def test_kepler_runge_lenz_conserved_along_rk4():
    from hamsym.continuous import FirstIntegral, integrate_reference, monitor

    entry = systems.get("kepler2d")
    ints = [FirstIntegral.from_expr(entry.system, k, e) for k, e in entry.integrals.items()]
    drift = monitor(integrate_reference(entry.system, entry.initial_state(), 3.0, 1e-3), ints)
    assert max(drift.values()) <= 1e-9


def test_entry_validation():
    base = systems.get("cubic")
    with pytest.raises(ConfigError):
        systems.CatalogEntry("x", "continuous", base.system, base.symmetries, expect={"X1": "maybe"})
    with pytest.raises(ConfigError):
        systems.CatalogEntry("x", "continuous", base.system, base.symmetries, expect={"Z": "invariant"})
    with pytest.raises(ConfigError):
        systems.CatalogEntry("x", "continuous", base.system, [Symmetry("B", "0", ["w"], ["0"])], {})
    with pytest.raises(ConfigError):
        systems.CatalogEntry("x", "continuous", base.system, base.symmetries, {}, integrals={"J": "hm*q1"})


def test_verdict_flags_reject_wrong_expectation():
    entry = systems.get("cubic")
    states = checks.sample_states(entry, 20, np.random.default_rng(1))
    rep = checks.classify_continuous(entry, entry.symmetry("X3"), states)
    assert rep.verdict == "divergence-invariant"
    assert checks.confirm(rep, "invariant") is False
    assert checks.confirm(rep, "divergence_invariant") is True
    assert checks.confirm(rep, None) is None
    with pytest.raises(ValueError):
        checks.confirm(rep, "sometimes")


def test_misfit_needs_enough_states():
    entry = systems.get("kepler3d")
    states = checks.sample_states(entry, 10, np.random.default_rng(2))
    with pytest.raises(ValueError):
        checks.divergence_misfit(entry, entry.symmetry("X1"), states)


def test_skip_budget():
    calls = iter(range(100))

    def flaky():
        k = next(calls)
        if k % 3 == 0:
            raise ValueError("domain")
        return k

    with pytest.raises(checks.SkipBudgetExceeded):
        checks._collect(20, flaky)
    out, skipped = checks._collect(5, lambda: 1.0)
    assert out == [1.0] * 5 and skipped == 0
