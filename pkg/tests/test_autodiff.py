import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hamsym.autodiff import (
    Dual,
    HyperDual,
    Jet2,
    directional,
    directional2,
    grad,
    hessian,
    jacobian,
    value_and_grad,
)
from hamsym.expr import evaluate, parse


def test_grad_examples():
    assert np.allclose(grad("0.5*(q1^2+p1^2)", {"q1": 1, "p1": 0}, ["q1", "p1"]), [1, 0])
    assert np.allclose(grad("1/q1^2", {"q1": 2}, ["q1"]), [-0.25])
    assert np.allclose(jacobian(["q1^3"], {"q1": 2}, ["q1"]), [[12]])


def test_constant_expression_has_zero_gradient():
    val, g = value_and_grad("2 + pi", {"q1": 1.0}, ["q1"])
    assert val == pytest.approx(2 + np.pi)
    assert np.all(g == 0)


def fd_grad(text, point, wrt, eps=1e-6):
    e = parse(text)
    out = []
    for v in wrt:
        up, dn = dict(point), dict(point)
        up[v] += eps
        dn[v] -= eps
        out.append((evaluate(e, up) - evaluate(e, dn)) / (2 * eps))
    return np.array(out)


FUNCS = [
    "sin(x*y) + cos(z)^2",
    "exp(x - y) / (1 + z^2)",
    "sqrt(1 + x^2 + y^4) * atan(z)",
    "log(3 + sin(x)) - tan(0.3*y*z)",
    "abs(x - 0.1) * y^-2",
    "(x^2 + y^2 + z^2)^(-1.5)",
    "x^y",
]


@pytest.mark.parametrize("text", FUNCS)
def test_grad_matches_central_differences(text, rng):
    for _ in range(25):
        point = dict(zip("xyz", rng.uniform(0.4, 1.6, 3)))
        g = grad(text, point, list("xyz"))
        assert np.allclose(g, fd_grad(text, point, list("xyz")), rtol=1e-6, atol=1e-7)


@pytest.mark.parametrize("text", FUNCS)
def test_second_order_types_agree(text, rng):
    for _ in range(10):
        point = dict(zip("xyz", rng.uniform(0.4, 1.6, 3)))
        val, g, H = hessian(text, point, list("xyz"))
        assert np.allclose(H, H.T)
        assert np.allclose(g, grad(text, point, list("xyz")), rtol=1e-14)
        for i, a in enumerate("xyz"):
            for j, b in enumerate("xyz"):
                f, du, dv, duv = directional2(text, point, {a: 1.0}, {b: 1.0})
                assert f == pytest.approx(val)
                assert du == pytest.approx(g[i], rel=1e-13)
                assert dv == pytest.approx(g[j], rel=1e-13)
                assert duv == pytest.approx(H[i, j], rel=1e-11, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3))
def test_directional_is_gradient_projection(x, u, v):
    point = {"x": x, "y": 0.5}
    text = "sin(x)*y + x^3"
    _, d = directional(text, point, {"x": u, "y": v})
    assert d == pytest.approx(grad(text, point, ["x", "y"]) @ [u, v], rel=1e-12, abs=1e-12)


def test_integer_powers_of_negative_base():
    # integer exponents go by repeated multiplication, so no log of a negative number
    g = grad("1/q^3", {"q": -2.0}, ["q"])
    assert g[0] == pytest.approx(-3 / 16)
    _, _, H = hessian("q^4", {"q": -1.0}, ["q"])
    assert H[0, 0] == pytest.approx(12.0)


def test_scalar_arithmetic():
    a = Dual(2.0, np.array([1.0, 0.0]))
    b = Dual(3.0, np.array([0.0, 1.0]))
    c = (a * b - a / b + 1) * (a + b)
    assert isinstance(c, Dual)
    assert c.val == pytest.approx((6 - 2 / 3 + 1) * 5)
    h = HyperDual(2.0, 1.0, 1.0)
    assert (h * h).d12 == pytest.approx(2.0)
    j = Jet2(2.0, np.array([1.0]), np.zeros((1, 1)))
    assert (j * j * j).H[0, 0] == pytest.approx(12.0)
