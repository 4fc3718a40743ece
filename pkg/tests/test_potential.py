import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from singular_liouville.potential import (
    CONSTANT,
    EXAMPLE,
    PotentialCoeffs,
    check_hypotheses,
    eval_V,
    eval_V_half,
    half_coefficients,
    taylor_V_half_around,
)

coeff = st.floats(-5, 5, allow_nan=False)
coeffs = st.builds(PotentialCoeffs, A0=coeff, A1=coeff, A2=coeff, D0=coeff, D1=coeff, D2=coeff, D3=coeff)
points = st.tuples(st.floats(0, 0.99), st.floats(0, 2 * np.pi)).map(lambda t: t[0] * np.exp(1j * t[1]))


def test_normalized_and_example_value():
    assert eval_V(EXAMPLE, 0j) == 1.0
    assert eval_V(EXAMPLE, (0.1, 0.0)) == pytest.approx(1.0002, abs=1e-15)
    assert eval_V_half(EXAMPLE, (0.1, 0.0)) == pytest.approx(1.02, abs=1e-15)


@settings(max_examples=100, deadline=None)
@given(coeffs, points)
def test_even(c, x):
    assert eval_V(c, x) == pytest.approx(eval_V(c, -x), rel=1e-14, abs=1e-14)


@settings(max_examples=100, deadline=None)
@given(coeffs, points)
def test_half_is_same_at_both_roots(c, y):
    r = np.sqrt(y + 0j)
    assert eval_V(c, r) == pytest.approx(eval_V(c, -r), rel=1e-14, abs=1e-14)


def test_half_coefficients_against_symbolic_pullback():
    # independent oracle: substitute x = sqrt(y) symbolically and re-expand in y1, y2
    A0, A1, A2, D0, D1, D2, D3 = sp.symbols("A0 A1 A2 D0 D1 D2 D3")
    x1, x2, y1, y2 = sp.symbols("x1 x2 y1 y2", real=True)
    quartic = (A0, A1, A2, -A1, A0)
    sextic = (D0, D1, -D2, D3, D2, D1, -D0)
    V = 1 + sum(a * x1 ** (4 - j) * x2**j for j, a in enumerate(quartic))
    V += sum(d * x1 ** (6 - j) * x2**j for j, d in enumerate(sextic))
    # in polar form: |x|^2 = |y|, x1^2 - x2^2 = y1, 2 x1 x2 = y2
    r2 = sp.sqrt(y1**2 + y2**2)
    sub_x1sq = (r2 + y1) / 2
    sub_x2sq = (r2 - y1) / 2
    expr = sp.expand(V)
    poly = sp.Poly(expr, x1, x2)
    out = 0
    for (i, j), a in poly.terms():
        # every term has i + j even; odd i pairs with odd j through x1 x2 = y2 / 2
        if i % 2:
            out += a * sub_x1sq ** ((i - 1) // 2) * sub_x2sq ** ((j - 1) // 2) * (y2 / 2)
        else:
            out += a * sub_x1sq ** (i // 2) * sub_x2sq ** (j // 2)
    out = sp.expand(out) - 1
    f = sp.lambdify((y1, y2, A0, A1, A2, D0, D1, D2, D3), out, "numpy")
    rng = np.random.default_rng(3)
    for _ in range(20):
        vals = rng.uniform(-3, 3, 7)
        c = PotentialCoeffs(*vals)
        y = rng.uniform(-0.6, 0.6, 2)
        ref = f(y[0], y[1], *vals)
        mine = sum(k * y[0] ** i * y[1] ** j for (i, j), k in half_coefficients(c).items())
        assert mine == pytest.approx(ref, rel=1e-11, abs=1e-13)


def test_modes_agree_on_random_points():
    rng = np.random.default_rng(0)
    r, t = np.sqrt(rng.uniform(0, 1, 1000)) * 0.99, rng.uniform(0, 2 * np.pi, 1000)
    y = r * np.exp(1j * t)
    for c in (EXAMPLE, PotentialCoeffs(1.5, -0.3, 2.2, 0.7, -1.1, 0.4, 2.0)):
        a = eval_V_half(c, y, mode="polynomial")
        b = eval_V_half(c, y, mode="roots")
        assert np.max(np.abs(a - b)) <= 1e-13


def test_quadratic_part_under_constraint():
    c = PotentialCoeffs(A0=2, A1=0, A2=4)
    h = half_coefficients(c)
    assert (h[(2, 0)], h[(1, 1)], h[(0, 2)]) == (2, 0, 2)


def test_taylor_at_origin_and_example_coefficient():
    t = taylor_V_half_around(EXAMPLE, (0.0, 0.0))
    assert t.linear == (0.0, 0.0)
    D0, D1, D2, D3 = EXAMPLE.D0, EXAMPLE.D1, EXAMPLE.D2, EXAMPLE.D3
    assert tuple(t.cubic.values()) == (D0, D1 / 2, (3 * D0 - D2) / 4, D1 / 4 + D3 / 8)
    assert t.cubic["(3D0-D2)/4"] == 1.0


def test_taylor_error_within_order_tag():
    b = np.array([0.03, -0.02])
    t = taylor_V_half_around(EXAMPLE, b)
    vb = eval_V_half(EXAMPLE, b)
    ratios = []
    for rho in (1e-2, 1e-3):
        th = np.linspace(0, 2 * np.pi, 64, endpoint=False)
        x = np.stack([b[0] + rho * np.cos(th), b[1] + rho * np.sin(th)], axis=-1)
        err = np.abs(eval_V_half(EXAMPLE, x) / vb - t(x))
        ratios.append(np.max(err / t.order_bound(x)))
    # a single constant bounds the error on both circles
    assert max(ratios) < 10.0


def test_hypotheses():
    assert check_hypotheses(EXAMPLE).all_ok
    assert check_hypotheses(CONSTANT).positivity
    bad = check_hypotheses(PotentialCoeffs(A0=3, A2=4))
    assert not bad.techni and not bad.all_ok
    assert any("A0=2" in m for m in bad.failures())
    neg = check_hypotheses(PotentialCoeffs(A0=2, A2=4, remainder=lambda x1, x2: -2.0 + 0 * x1))
    assert not neg.positivity
