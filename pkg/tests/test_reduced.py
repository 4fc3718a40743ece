import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from singular_liouville.potential import EXAMPLE, PotentialCoeffs
from singular_liouville.reduced import (
    DegreeUndefinedError,
    brouwer_degree,
    classify,
    eval_F,
    eval_J,
    find_zeros,
    hessian_J,
)

xis = st.tuples(st.floats(-3, 3), st.floats(-3, 3))
ds = st.tuples(*[st.floats(-5, 5)] * 4).map(lambda d: PotentialCoeffs(A0=2, A2=4, D0=d[0], D1=d[1], D2=d[2], D3=d[3]))


def test_example_zeros_and_constant_term():
    assert np.all(eval_F((1.0, -1.0), EXAMPLE) == 0)
    assert np.all(eval_F((-1.0, 1.0), EXAMPLE) == 0)
    assert np.array_equal(eval_F((0.0, 0.0), EXAMPLE), (1.0, 1.0))


@settings(max_examples=50, deadline=None)
@given(ds)
def test_constant_term_formula(c):
    F0 = eval_F((0.0, 0.0), c)
    assert F0[0] == pytest.approx((15 * c.D0 - c.D2) / 4)
    assert F0[1] == pytest.approx((10 * c.D1 + 3 * c.D3) / 8)


@settings(max_examples=100, deadline=None)
@given(xis)
def test_example_potential_function(xi):
    x, y = xi
    assert eval_J(xi, EXAMPLE) == pytest.approx(x**2 * y + x * y**2 + x + y, abs=1e-12)


def test_J_at_origin():
    assert eval_J((0.0, 0.0), PotentialCoeffs(D0=1.3, D1=-2, D2=0.4, D3=7)) == 0.0


@settings(max_examples=50, deadline=None)
@given(ds, xis)
def test_gradient_and_hessian_by_differences(c, xi):
    h = 1e-5
    xi = np.array(xi)
    e = np.eye(2)
    grad = [(eval_J(xi + h * e[k], c) - eval_J(xi - h * e[k], c)) / (2 * h) for k in range(2)]
    assert np.allclose(grad, eval_F(xi, c), atol=1e-7 * (1 + np.max(np.abs(grad))))
    H = np.stack([(eval_F(xi + h * e[k], c) - eval_F(xi - h * e[k], c)) / (2 * h) for k in range(2)], axis=1)
    assert np.allclose(H, hessian_J(xi, c), atol=1e-6 * (1 + np.max(np.abs(H))))


def test_classify_example():
    eigs, label = classify(EXAMPLE, (1.0, -1.0))
    assert np.allclose(sorted(eigs), (-2, 2), atol=1e-10) and label == "saddle"
    eigs, label = classify(EXAMPLE, (-1.0, 1.0))
    assert np.allclose(sorted(eigs), (-2, 2), atol=1e-10) and label == "saddle"


def test_hessian_pure_cubic():
    c = PotentialCoeffs(D0=1)
    xi = (0.7, -0.2)
    # J = x^3 + (3/4) x y^2 + (15/4) x
    assert np.allclose(hessian_J(xi, c), [[6 * 0.7, 1.5 * -0.2], [1.5 * -0.2, 1.5 * 0.7]])


def test_degrees():
    assert brouwer_degree(EXAMPLE, (1.0, -1.0), 0.1) == -1
    assert brouwer_degree(EXAMPLE, (-1.0, 1.0), 0.1) == -1
    assert brouwer_degree(EXAMPLE, (0.0, 0.0), 0.1) == 0
    assert brouwer_degree(EXAMPLE, (0.0, 0.0), 10.0) == -2
    with pytest.raises(DegreeUndefinedError):
        brouwer_degree(EXAMPLE, (0.0, -1.0), 1.0)  # circle passes through (1, -1)


def _sympy_zeros(c, box=3.0):
    x, y = sp.symbols("x y")
    k = [sp.nsimplify(v) for v in (c.D0, c.D1 / 2, (3 * c.D0 - c.D2) / 4, (2 * c.D1 + c.D3) / 8,
                                   (15 * c.D0 - c.D2) / 4, (10 * c.D1 + 3 * c.D3) / 8)]
    J = k[0] * x**3 + k[1] * x**2 * y + k[2] * x * y**2 + k[3] * y**3 + k[4] * x + k[5] * y
    sols = sp.solve([sp.diff(J, x), sp.diff(J, y)], [x, y], dict=True)
    out = []
    for s in sols:
        a, b = complex(s[x]), complex(s[y])
        if abs(a.imag) < 1e-12 and abs(b.imag) < 1e-12 and abs(a.real) <= box and abs(b.real) <= box:
            out.append((a.real, b.real))
    return sorted(out)


def test_find_zeros_example_is_complete():
    zs = find_zeros(EXAMPLE, n_starts=20)
    got = sorted(z.xi for z in zs)
    ref = _sympy_zeros(EXAMPLE)
    assert len(got) == len(ref) == 2
    assert np.allclose(got, ref, atol=1e-12)
    assert all(z.degree == -1 and z.stable and z.label == "saddle" for z in zs)


@pytest.mark.parametrize("d", [(1, 0.5, -2, 3), (0.3, -1, 2, 0.7), (-1, 2, 1, -3)])
def test_find_zeros_matches_symbolic(d):
    c = PotentialCoeffs(A0=2, A2=4, D0=d[0], D1=d[1], D2=d[2], D3=d[3])
    ref = _sympy_zeros(c)
    got = sorted(z.xi for z in find_zeros(c, n_starts=30))
    assert len(got) == len(ref)
    if ref:
        assert np.allclose(got, ref, atol=1e-9)


def test_degenerate_field():
    zs = find_zeros(PotentialCoeffs(A0=2, A2=4))
    assert zs.degenerate_field and len(zs) == 0


def test_degenerate_zero_against_grid_scan():
    c = PotentialCoeffs(D0=1, D2=15)
    zs = find_zeros(c)
    # brute-force scan of |F| on a 1e-3 grid
    g = np.arange(-3, 3 + 5e-4, 1e-3)
    X, Y = np.meshgrid(g, g, indexing="ij")
    F = np.hypot(*np.moveaxis(eval_F(np.stack([X, Y], -1), c), -1, 0))
    i, j = np.unravel_index(np.argmin(F), F.shape)
    assert F[i, j] < 1e-5
    assert len(zs) == 1
    assert np.hypot(zs[0].xi[0] - g[i], zs[0].xi[1] - g[j]) < 2e-3
    assert zs[0].label == "degenerate" and zs[0].at_origin
    assert any("origin" in n for n in zs.notes)
