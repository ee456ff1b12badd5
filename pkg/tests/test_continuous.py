import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hamsym.continuous import (
    ContinuousSystem,
    FirstIntegral,
    IntegrationError,
    State,
    Symmetry,
    check_hamiltonian_identity,
    equation_invariance_residuals,
    first_integral_value,
    integrate_reference,
    invariance_residual,
    monitor,
    rk4_step,
    vector_field,
)
from hamsym.errors import ConfigError, DomainError

OSC = ContinuousSystem(1, "0.5*(q1^2 + p1^2)")
TIME = Symmetry("T", "1", ["0"], ["0"])
ROTATION = Symmetry("R", "0", ["p1"], ["-q1"])
SCALING = Symmetry("S", "0", ["q1"], ["p1"])
SHEAR = Symmetry("Q", "0", ["q1"], ["0"])


def at(q, p, t=0.0):
    return State(t, np.array([q]), np.array([p]))


def test_vector_field_by_hand():
    qdot, pdot = vector_field(OSC, at(1.0, 2.0))
    assert qdot == pytest.approx([2.0])
    assert pdot == pytest.approx([-1.0])


def test_time_translation_gives_minus_energy():
    s = at(0.3, -1.1)
    assert float(invariance_residual(OSC, TIME, s)) == pytest.approx(0.0, abs=1e-15)
    assert first_integral_value(OSC, TIME, s) == pytest.approx(-0.5 * (0.09 + 1.21))


def test_rotation_is_a_divergence_symmetry():
    # by hand: zeta*qdot + p*D(eta) - X(H) = -qp - pq - 0 = -2pq = D(-q^2)
    s = at(0.7, 0.4)
    assert float(invariance_residual(OSC, ROTATION, s)) == pytest.approx(-0.56, abs=1e-15)
    with_v = Symmetry("R", "0", ["p1"], ["-q1"], V="-q1^2")
    assert float(invariance_residual(OSC, with_v, s)) == pytest.approx(0.0, abs=1e-15)
    # I = p^2 - 0 - (-q^2) is twice the energy
    assert first_integral_value(OSC, with_v, s) == pytest.approx(0.4**2 + 0.7**2)


def test_scaling_is_admitted_but_not_variational():
    # invariance expression evaluates to p^2 - q^2 by hand
    s = at(1.0, 2.0)
    assert float(invariance_residual(OSC, SCALING, s)) == pytest.approx(3.0)
    a, b = equation_invariance_residuals(OSC, SCALING, s)
    assert np.allclose(a, 0) and np.allclose(b, 0)
    a, b = equation_invariance_residuals(OSC, SHEAR, s)
    assert not np.allclose(np.concatenate([a, b]), 0)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.floats(-2, 2), min_size=5, max_size=5),
    st.sampled_from([TIME, ROTATION, SCALING, SHEAR]),
)
def test_identity_off_solutions(values, sym):
    t, q, p, qd, pd = values
    sys = ContinuousSystem(1, "0.5*p1^2 + q1^4/4 + t*q1")
    r = check_hamiltonian_identity(sys, sym, at(q, p, t), [qd], [pd])
    assert r.relative <= 1e-12


def test_identity_kepler_like_system(rng):
    # the identity holds for any generator, so an arbitrary one will do
    sys = ContinuousSystem(2, "0.5*(p1^2 + p2^2) - K^2/sqrt(q1^2 + q2^2)", {"K": 1.3}, singular=True)
    sym = Symmetry("Y", "0", ["2*p1*q1 - q1*p1 - p1*q1", "q1*p2 - 2*q2*p1"],
                   ["p1*p2 - K^2*q2^2/sqrt(q1^2+q2^2)^3", "-p1^2 + K^2*q1*q2/sqrt(q1^2+q2^2)^3"])
    for _ in range(50):
        s = State(rng.uniform(0, 1), rng.uniform(0.5, 1.5, 2), rng.uniform(-1, 1, 2))
        r = check_hamiltonian_identity(sys, sym, s, rng.uniform(-2, 2, 2), rng.uniform(-2, 2, 2))
        assert r.relative <= 1e-12


def test_singular_guard_and_bad_symmetries():
    sys = ContinuousSystem(1, "1/q1", singular=True)
    with pytest.raises(DomainError):
        sys.bindings(at(0.0, 1.0))
    with pytest.raises(ConfigError):
        OSC.check_symmetry(Symmetry("B", "0", ["w"], ["0"]))
    with pytest.raises(ConfigError):
        OSC.check_symmetry(Symmetry("B", "0", ["0", "0"], ["0", "0"]))
    with pytest.raises(ConfigError):
        ContinuousSystem(1, "q2")


def test_state_validation():
    with pytest.raises(ValueError):
        State(0.0, [1.0, 2.0], [1.0])
    with pytest.raises(ValueError):
        State(0.0, [np.nan], [1.0])


def test_rk4_error_scales_with_fourth_power():
    def err(dt):
        traj = integrate_reference(OSC, at(1.0, 0.0), 2.0, dt)
        return abs(traj[-1].q[0] - np.cos(2.0))

    assert err(0.1) / err(0.05) == pytest.approx(16, rel=0.1)


def test_integrate_hits_end_time():
    traj = integrate_reference(OSC, at(1.0, 0.0), 1.0, 0.3)
    assert [s.t for s in traj] == pytest.approx([0, 0.3, 0.6, 0.9, 1.0])
    assert traj[-1].t == 1.0
    with pytest.raises(ValueError):
        integrate_reference(OSC, at(1.0, 0.0), 1.0, 0.0)
    with pytest.raises(ValueError):
        integrate_reference(OSC, at(1.0, 0.0, t=2.0), 1.0, 0.1)


def test_integration_error_keeps_partial_trajectory():
    sys = ContinuousSystem(1, "0.5*p1^2 + log(q1)")
    with pytest.raises(IntegrationError) as info:
        integrate_reference(sys, at(0.5, -3.0), 2.0, 0.1)
    assert 1 <= len(info.value.trajectory) < 21


def test_monitor_and_rk4_step():
    integrals = [FirstIntegral.from_symmetry(OSC, TIME), FirstIntegral.from_expr(OSC, "E", "0.5*(q1^2+p1^2)")]
    traj = integrate_reference(OSC, at(1.0, 0.0), 3.0, 0.01)
    drift = monitor(traj, integrals)
    assert set(drift) == {"I[T]", "E"}
    assert drift["E"] == pytest.approx(drift["I[T]"], rel=1e-9)
    assert 0 < drift["E"] < 1e-9
    s = rk4_step(OSC, at(1.0, 0.0), 0.1)
    assert s.t == pytest.approx(0.1)
    with pytest.raises(ValueError):
        monitor([], integrals)
