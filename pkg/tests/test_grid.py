import numpy as np
import pytest
import scipy.sparse.linalg as spla
from hypothesis import given, settings, strategies as st

from singular_liouville.grid import DiskField, PolarGrid, _end_corrected_midpoint, fornberg


def test_fornberg_central_weights():
    w = fornberg(0.0, np.array([-2, -1, 0, 1, 2.0]), 2)
    assert np.allclose(w[1], [1 / 12, -2 / 3, 0, 2 / 3, -1 / 12], atol=1e-14)
    assert np.allclose(w[2], [-1 / 12, 4 / 3, -5 / 2, 4 / 3, -1 / 12], atol=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.floats(-1, 1), st.integers(3, 7))
def test_fornberg_exact_on_polynomials(z, k):
    x = np.linspace(-1.5, 1.2, k)
    w = fornberg(z, x, 2)
    for p in range(k):
        assert np.dot(w[0], x**p) == pytest.approx(z**p, abs=1e-10)
        if p >= 1:
            assert np.dot(w[1], x**p) == pytest.approx(p * z ** (p - 1), abs=1e-8)


def test_end_corrected_midpoint_accuracy():
    f = lambda s: np.exp(s) * np.cos(3 * s)
    exact = (np.exp(1) * (np.cos(3) + 3 * np.sin(3)) - 1) / 10
    errs = []
    for n in (16, 32, 64):
        s = (np.arange(n) + 0.5) / n
        errs.append(abs(np.dot(_end_corrected_midpoint(n), f(s)) - exact))
    assert errs[2] < 1e-9
    assert errs[0] / errs[1] > 20  # well beyond the plain midpoint's factor 4


@pytest.mark.parametrize("center,kappa", [(0j, 0.0), (0.3 - 0.2j, 4.0), (0.05j, 8.0)])
def test_grid_quadrature(center, kappa):
    for f, exact in ((lambda x: np.ones(x.shape), np.pi), (lambda x: np.abs(x) ** 2, np.pi / 2)):
        errs = []
        for n in (64, 128, 256):
            g = PolarGrid(n, 64, center=center, kappa=kappa)
            errs.append(abs(g.integrate(f(g.x)) - exact))
        assert errs[-1] < 1e-7
        # end-corrected rule: sixth order once the Jacobian is resolved
        assert errs[-1] < 1e-14 or errs[-2] / errs[-1] > 2**5


def test_for_bubble_resolves_core():
    d = 1e-4
    g = PolarGrid.for_bubble(128, 32, 0.01, d)
    assert g.r[0] * (1 - 0.01**2) < d / 4


@pytest.mark.parametrize("order,expected", [(2, 2), (4, 4)])
def test_poisson_convergence_order(order, expected):
    # -Lap u = f for u = (1 - |y|^2) cos(y1) with data set in y
    u_ex = lambda y: (1 - np.abs(y) ** 2) * np.cos(y.real)
    f = lambda y: 4 * np.cos(y.real) - 4 * y.real * np.sin(y.real) + (1 - np.abs(y) ** 2) * np.cos(y.real)
    errs = []
    for n in (16, 32, 64):
        g = PolarGrid(n, 2 * n, kappa=1.0, order=order)
        A = -g.laplacian().tocsc()
        u = spla.spsolve(A, f(g.y).ravel())
        errs.append(np.max(np.abs(u - u_ex(g.y).ravel())))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates > expected - 0.3)


def test_dirichlet_energy():
    g = PolarGrid(64, 64, center=0.2 + 0.1j, kappa=2.0)
    u = 1 - np.abs(g.x) ** 2  # |grad u|^2 = 4|x|^2, integral 2 pi
    assert g.dirichlet_energy(u) == pytest.approx(2 * np.pi, rel=1e-5)


def test_interpolation_and_field():
    g = PolarGrid(64, 64, center=0.1 - 0.1j, kappa=2.0)
    u = lambda x: (1 - np.abs(x) ** 2) * np.exp(x.real)
    fld = DiskField(g, u(g.x))
    pts = np.array([0.0, 0.3 + 0.4j, -0.8j, 0.95, 0.1 - 0.1j])
    assert np.allclose(fld(pts), u(pts), atol=1e-6)
    assert abs(fld(np.array([1.0 + 0j]))[0]) < 1e-12


def test_dskf_roundtrip(tmp_path):
    g = PolarGrid(16, 8, center=0.25 - 0.5j, kappa=3.0, order=6)
    rng = np.random.default_rng(0)
    fld = DiskField(g, rng.normal(size=g.shape), boundary_value=0.0)
    data = fld.to_bytes()
    assert data[:4] == b"DSKF" and len(data) == 64 + 8 * g.size
    back = DiskField.from_bytes(data)
    assert np.array_equal(back.values, fld.values)
    assert back.grid.center == g.center and back.grid.kappa == g.kappa and back.grid.order == 6
    fld.save(tmp_path / "f.dskf")
    assert DiskField.load(tmp_path / "f.dskf").to_bytes() == data
    with pytest.raises(ValueError):
        DiskField.from_bytes(b"XXXX" + data[4:])
    with pytest.raises(ValueError):
        DiskField.from_bytes(data[:-8])


def test_csv_output(tmp_path):
    g = PolarGrid(8, 8)
    fld = DiskField(g, np.arange(64.0).reshape(8, 8))
    fld.to_csv(tmp_path / "f.csv")
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0] == "r,theta,value" and len(lines) == 65
    r, t, v = (float(s) for s in lines[1].split(","))
    assert r == pytest.approx(g.r[0]) and v == 0.0


def test_grid_validation():
    with pytest.raises(ValueError):
        PolarGrid(8, 9)
    with pytest.raises(ValueError):
        PolarGrid(16, 16, center=1.0)
    with pytest.raises(ValueError):
        PolarGrid(16, 16, order=3)
