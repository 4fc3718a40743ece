import numpy as np
import pytest
from scipy.special import jn_zeros

from singular_liouville.ansatz import BubbleParams, delta_of, exp_W, project_W_exact
from singular_liouville.grid import DiskField, PolarGrid
from singular_liouville.potential import CONSTANT, EXAMPLE, eval_V_half
from singular_liouville.quadrature import fold_integral_check, reduced_projection
from singular_liouville.solver import (
    Discretization,
    LinearizedOperator,
    SolveConfig,
    linearized_min_sv,
    mass,
    newton_solve,
    projected_solve,
    pull_back,
    quadratic_certificate,
    radial_fixture,
    solve_poisson,
)


def test_poisson_constant_and_zero():
    errs = []
    for n in (32, 64, 128):
        g = PolarGrid(n, 2 * n, center=0.2 - 0.1j, kappa=1.0)
        u = solve_poisson(DiskField(g, np.full(g.shape, 4.0)))
        errs.append(np.max(np.abs(u.values - (1 - np.abs(g.x) ** 2))))
    assert errs[-1] < 1e-8
    assert errs[0] / errs[1] > 12 and errs[1] / errs[2] > 12
    assert np.all(solve_poisson(DiskField(g, np.zeros(g.shape))).values == 0)


def test_poisson_reproduces_projection():
    p = BubbleParams(lam=1.0, b=0.1 + 0.05j, delta=0.05)
    errs = []
    for n in (64, 128, 256):
        g = PolarGrid.for_bubble(n, n, p.b, p.delta)
        u = solve_poisson(DiskField(g, exp_W(p, g.x)))
        errs.append(np.max(np.abs(u.values - project_W_exact(p, g.x))))
    assert errs[-1] < 2e-4
    assert errs[0] / errs[1] > 10 and errs[1] / errs[2] > 10


def test_radial_fixture_formula():
    for lam in (1.0, 1e-2, 1e-4):
        d = radial_fixture(lam).delta
        assert lam / 4 == pytest.approx(8 * d**2 / (1 + d**2) ** 2, rel=1e-13)
    with pytest.raises(ValueError):
        radial_fixture(9.0)


@pytest.mark.parametrize("lam", [1.0, 1e-2])
def test_newton_radial_fixture(lam):
    exact = radial_fixture(lam)
    errs = []
    for n in (128, 256):
        r = newton_solve(SolveConfig(lam=lam, coeffs=CONSTANT, n_r=n, n_theta=32))
        assert r.converged and r.residuals[-1] <= 1e-10 and r.n_iter <= 8
        assert r.certificate["quadratic"]
        errs.append(np.max(np.abs(r.w.values - project_W_exact(exact, r.grid.x))))
    assert errs[1] < 1e-6
    assert errs[1] < errs[0] / 8  # fourth-order stencils


@pytest.mark.parametrize("lam", [1e-2, 1e-3])
def test_minimal_branch(lam):
    # small-lambda branch from w0 = 0: w ~ (lambda/4) u1 with -Lap u1 = V(y^(1/2));
    # u1(0) = 1/4 + 2 int_0^1 r^3 log(1/r) dr = 3/8
    ref = BubbleParams(lam=lam, b=0j, delta=0.5)
    cfg = SolveConfig(lam=lam, bubble=ref, coeffs=EXAMPLE, n_r=128, n_theta=32)
    disc = Discretization(cfg, ref)
    r = newton_solve(cfg, w0=DiskField(disc.grid, np.zeros(disc.grid.shape)), disc=disc)
    assert r.converged
    assert r.w_at(np.array([0j]))[0] / lam == pytest.approx(3 / 32, rel=0.02)
    assert np.max(np.abs(r.w.values)) < 0.1 * lam


def test_quadratic_certificate():
    assert quadratic_certificate([1e-1, 1e-2, 1e-4, 1e-8])["quadratic"]
    assert not quadratic_certificate([0.5**k for k in range(1, 25)])["quadratic"]


def test_projected_multipliers_follow_reduced_projection():
    # c(b) = -(3 / 2 pi) int R PZ at leading order
    lam = 1e-5
    d0 = delta_of(lam, 0j, EXAMPLE)
    sc = d0 * np.sqrt(np.log(1 / d0))
    cfg = SolveConfig(lam=lam, coeffs=EXAMPLE, n_r=128, n_theta=64)
    C, P = [], []
    for xi in [(1, -1), (0, 0), (2, 0), (0, 1), (1.5, -0.5), (-1, -1)]:
        r = projected_solve(cfg, complex(*xi) * sc, check_domain=False)
        assert r.converged
        C.append(r.c)
        P.append([reduced_projection(r.ref, EXAMPLE, i) for i in (1, 2)])
    C, P = np.ravel(C), -3 / (2 * np.pi) * np.ravel(P)
    assert np.corrcoef(C, P)[0, 1] >= 0.99
    assert np.dot(C, P) / np.dot(P, P) == pytest.approx(1.0, rel=0.02)


def test_projected_solve_constraints_and_domain():
    lam = 1e-4
    cfg = SolveConfig(lam=lam, coeffs=EXAMPLE, n_r=64, n_theta=32)
    r = projected_solve(cfg, 1e-3 - 1e-3j)
    phi, c = r
    d = r.disc
    for j in range(2):
        assert abs(np.sum(d.wx * d.eW * d.Z[:, j] * phi.values.ravel())) < 1e-10 * np.sum(d.wx * d.eW)
    with pytest.raises(ValueError):
        projected_solve(cfg, 0.5)


def test_min_sv():
    # lambda = 0: first Dirichlet eigenvalue of the disk
    op = LinearizedOperator.at_bubble(SolveConfig(lam=1e-3, coeffs=EXAMPLE, n_r=64, n_theta=32))
    ev = linearized_min_sv(op, norm="l2", lam_zero=True, restricted_to_Kperp=False)
    assert ev == pytest.approx(jn_zeros(0, 1)[0] ** 2, rel=1e-5)
    # near kernel from Z^1, Z^2 without the restriction
    p = BubbleParams.from_delta(1e-3, 0j, EXAMPLE)
    r = projected_solve(SolveConfig(lam=p.lam, coeffs=EXAMPLE, n_r=128, n_theta=64), 0j)
    op = LinearizedOperator.from_result(r)
    restricted = linearized_min_sv(op)
    full = linearized_min_sv(op, restricted_to_Kperp=False)
    assert restricted > 100 * full
    assert 0.5 < restricted * np.log(1e3) < 1.0


def test_pull_back_even_and_mass_identity():
    lam = 1e-4
    d = delta_of(lam, 0j, EXAMPLE)
    b = (1 - 1j) * d * np.sqrt(np.log(1 / d))
    r = projected_solve(SolveConfig(lam=lam, coeffs=EXAMPLE, n_r=256, n_theta=128), b)
    x = np.array([0.01 + 0.02j, 0.05 - 0.01j, 0.3 + 0.2j])
    assert np.array_equal(pull_back(r, x), pull_back(r, -x))
    with pytest.raises(ValueError):
        pull_back(r, np.array([0j]))
    f = lambda y: lam / 4 * eval_V_half(EXAMPLE, y) * np.exp(r.w_at(y))
    lhs, rhs = fold_integral_check(f, 2, center=r.ref.b, scale=r.ref.delta)
    # lambda int V e^u dx = 4 int |x|^2 f(x^2) dx = 2 int f dy
    assert mass(r) == pytest.approx(4 * lhs, rel=1e-4)
    assert 4 * lhs == pytest.approx(2 * 2 * rhs, rel=1e-9)
    assert mass(r) == pytest.approx(16 * np.pi, rel=0.01)


def test_config_validation():
    with pytest.raises(ValueError):
        SolveConfig(lam=0.0)
    with pytest.raises(ValueError):
        SolveConfig(lam=1.0, newton_tol=0)
