"""Newton solvers for -Lap w = (lambda/4) V(x^(1/2)) e^w on the unit disk.

Unknowns are corrections phi around an analytic projected bubble PW, so that
-Lap PW = e^W holds exactly and only phi is discretized:

    -Lap phi - (f0 e^phi - e^W) = 0,    f0 = (lambda/4) V(x^(1/2)) e^{PW} = e^W + R.

Grids are recentred on the bubble (see grid.py); in the grid variable the
equation picks up the conformal factor |dx/dy|^2.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .ansatz import BubbleParams, exp_W, kernel_Z, nonlinearity, project_W_exact
from .disk import as_complex
from .grid import DiskField, PolarGrid
from .potential import PotentialCoeffs, eval_V

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    def __init__(self, message, result=None, min_sv=None):
        super().__init__(message)
        self.result = result
        self.min_sv = min_sv


@dataclass
class SolveConfig:
    lam: float
    bubble: Optional[BubbleParams] = None
    coeffs: PotentialCoeffs = field(default_factory=PotentialCoeffs)
    newton_tol: float = 1e-11
    max_iter: int = 30
    deflate_radial: bool = False
    n_r: int = 256
    n_theta: int = 256
    order: int = 4
    core: float = 8.0

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if not (self.newton_tol > 0 and self.max_iter > 0):
            raise ValueError("tolerances and iteration limits must be positive")


class Discretization:
    """Grid, Laplacian and the analytic bubble data for one reference bubble."""

    def __init__(self, cfg: SolveConfig, ref: BubbleParams, grid: Optional[PolarGrid] = None):
        self.cfg, self.ref = cfg, ref
        self.grid = grid or PolarGrid.for_bubble(cfg.n_r, cfg.n_theta, ref.b, ref.delta,
                                                 core=cfg.core, order=cfg.order)
        g = self.grid
        self.A = (-g.laplacian()).tocsc()
        x = g.x.ravel()
        self.jac = g.jac.ravel()
        self.eW = exp_W(ref, x)
        # f0 at the reference lambda; the calibration mismatch is carried inside
        self.f0 = nonlinearity(ref, cfg.coeffs, x)
        self.PW = project_W_exact(ref, x)
        self.Z = np.stack([kernel_Z(j, ref, x) for j in (1, 2)], axis=1)
        self.wx = g.weights_x.ravel()
        self.wy = g.weights_y.ravel()

    def residual(self, phi):
        return self.A @ phi - self.jac * (self.f0 * np.exp(phi) - self.eW)

    def jacobian(self, phi):
        return (self.A - sp.diags(self.jac * self.f0 * np.exp(phi))).tocsc()

    def scale(self):
        return float(np.max(np.abs(self.jac * self.f0)))

    def backward_error(self, phi, F, extra=0.0):
        """max_i |F_i| / (|A| |phi| + J (f0 e^phi + e^W))_i: a residual that is not
        swamped by round-off in the stiff rows next to the pole."""
        denom = abs(self.A) @ np.abs(phi) + self.jac * (self.f0 * np.exp(phi) + self.eW) + extra
        return float(np.max(np.abs(F) / denom))

    def field(self, values) -> DiskField:
        return DiskField(self.grid, np.asarray(values).reshape(self.grid.shape))


def _lu(M):
    return spla.splu(M.tocsc(), permc_spec="MMD_AT_PLUS_A")


def solve_poisson(rhs: DiskField) -> DiskField:
    """Dirichlet solution of -Lap_x u = rhs on the field's grid."""
    g = rhs.grid
    b = (g.jac * rhs.values).ravel()
    if not np.all(np.isfinite(b)):
        raise ValueError("right-hand side is not finite")
    try:
        u = _lu(-g.laplacian()).solve(b)
    except RuntimeError as exc:
        raise SolverError(f"linear solve failed: {exc}") from exc
    return DiskField(g, u.reshape(g.shape))


@dataclass
class SolveResult:
    phi: DiskField
    ref: BubbleParams
    disc: Discretization = field(repr=False)
    residuals: list
    steps: list
    n_iter: int
    converged: bool
    c: Optional[np.ndarray] = None

    @property
    def grid(self) -> PolarGrid:
        return self.phi.grid

    @property
    def w(self) -> DiskField:
        return DiskField(self.grid, self.disc.PW.reshape(self.grid.shape) + self.phi.values)

    def w_at(self, x):
        """w at arbitrary points: analytic PW plus the interpolated correction."""
        return project_W_exact(self.ref, x) + self.phi(x)

    @property
    def certificate(self) -> dict:
        return quadratic_certificate(self.steps)

    @property
    def phi_h1(self) -> float:
        return float(np.sqrt(self.grid.dirichlet_energy(self.phi.values)))

    def density(self) -> np.ndarray:
        """(lambda/4) V(x^(1/2)) e^w on the grid."""
        return (self.disc.f0 * np.exp(self.phi.values.ravel())).reshape(self.grid.shape)

    def __iter__(self):
        # projected solves unpack as (phi, c)
        yield self.phi
        yield self.c


def quadratic_certificate(steps: Sequence[float], floor: float = 1e-13) -> dict:
    """Order estimates from the Newton step sizes e_k.

    Uses the last three steps above the round-off floor; the certificate holds
    when the observed order log(e_{k+1}/e_k)/log(e_k/e_{k-1}) reaches 1.6, or
    when e_{k+1}/e_k^2 stays bounded (<= 1e3) on those steps.
    """
    e = [s for s in steps if s > floor]
    ratios = [e[k + 1] / e[k] ** 2 for k in range(len(e) - 1)][-3:]
    orders = []
    for k in range(1, len(e) - 1):
        a, b = np.log(e[k + 1] / e[k]), np.log(e[k] / e[k - 1])
        if b < 0:
            orders.append(a / b)
    orders = orders[-3:]
    ok = bool((orders and max(orders) >= 1.6) or (ratios and max(ratios) <= 1e3))
    return {"ratios": ratios, "orders": orders, "quadratic": ok}


def _deflation_factor(e_list, wy, d, power=2, shift=1.0):
    """tau with the deflated step = tau * (Newton step), for M = prod(|e|^-p + shift)."""
    if not e_list:
        return 1.0
    s = 0.0
    for e in e_list:
        n2 = float(np.sum(wy * e * e))
        m = n2 ** (-power / 2) + shift
        grad_dot = -power * n2 ** (-power / 2 - 1) * float(np.sum(wy * e * d))
        s += grad_dot / m
    return 1.0 / (1.0 - s)


def newton_solve(cfg: SolveConfig, w0: Optional[DiskField] = None, known: Sequence[DiskField] = (),
                 disc: Optional[Discretization] = None) -> SolveResult:
    """Newton on -Lap w - (lambda/4) V(x^(1/2)) e^w = 0 around the reference bubble cfg.bubble.

    w0 is an initial w on the discretization grid (default: PW itself).
    ``known`` holds previously found w fields on the same grid to deflate.
    The residual is the componentwise backward error (see Discretization.backward_error).
    """
    ref = cfg.bubble or BubbleParams.from_lambda(cfg.lam, 0j, cfg.coeffs)
    if abs(ref.lam - cfg.lam) > 1e-14 * cfg.lam:
        ref = BubbleParams(lam=cfg.lam, b=ref.b, delta=ref.delta)
    disc = disc or Discretization(cfg, ref)
    phi = np.zeros(disc.grid.size) if w0 is None else np.asarray(w0.values).ravel() - disc.PW
    if not np.all(np.isfinite(phi)):
        raise ValueError("initial guess is not finite")
    known_phi = [np.asarray(k.values).ravel() - disc.PW for k in known]
    F = disc.residual(phi)
    res = [disc.backward_error(phi, F)]
    steps = []
    converged = res[-1] <= cfg.newton_tol
    it = 0
    while not converged and it < cfg.max_iter:
        it += 1
        Jm = disc.jacobian(phi)
        try:
            d = _lu(Jm).solve(-F)
        except RuntimeError as exc:
            sv = _smallest_sv_estimate(Jm)
            raise SolverError(f"singular Jacobian (smallest singular value ~ {sv:.3g})", min_sv=sv) from exc
        if cfg.deflate_radial or known_phi:
            d = d * _deflation_factor([phi - k for k in known_phi], disc.wy, d)
        t = 1.0
        for _ in range(12):
            trial = phi + t * d
            Ft = disc.residual(trial)
            r = disc.backward_error(trial, Ft)
            if np.isfinite(r) and (r < res[-1] or t < 1e-3):
                break
            t *= 0.5
        phi, F = trial, Ft
        steps.append(float(np.max(np.abs(t * d))))
        res.append(r)
        converged = r <= cfg.newton_tol
        log.debug("newton %d: residual %.3e step %.3e", it, r, steps[-1])
    return SolveResult(phi=disc.field(phi), ref=ref, disc=disc, residuals=res, steps=steps,
                       n_iter=it, converged=bool(converged))


def _smallest_sv_estimate(Jm) -> float:
    try:
        return float(spla.svds(Jm, k=1, which="SM", return_singular_vectors=False)[0])
    except Exception:  # the estimate is only diagnostic
        return float("nan")


def _bordered(Jm, B, C):
    top = sp.hstack([Jm, sp.csc_matrix(-B)])
    bottom = sp.hstack([sp.csc_matrix(C.T), sp.csc_matrix((C.shape[1], C.shape[1]))])
    return sp.vstack([top, bottom]).tocsc()


def projected_solve(cfg: SolveConfig, b, phi0: Optional[np.ndarray] = None, check_domain: bool = True,
                    n_r: Optional[int] = None) -> SolveResult:
    """Solve -Lap(PW + phi) - (lambda/4)V e^{PW+phi} = sum_j c_j Z^j e^W with phi orthogonal
    (in H^1_0) to PZ^1, PZ^2; returns the result with ``c`` set.

    The orthogonality is imposed as int phi e^W Z^j dx = 0, which is the same
    condition since -Lap PZ^j = e^W Z^j.
    """
    b = complex(as_complex(b))
    ref = BubbleParams.from_lambda(cfg.lam, b, cfg.coeffs)
    if check_domain and abs(b) > ref.delta ** (2.0 / 3.0):
        raise ValueError(f"|b| = {abs(b):.3g} exceeds delta^(2/3) = {ref.delta ** (2 / 3):.3g}")
    disc = Discretization(cfg, ref)
    N = disc.grid.size
    B = (disc.jac * disc.eW)[:, None] * disc.Z
    C = (disc.wx * disc.eW)[:, None] * disc.Z
    # constraint rows are rescaled to the size of the interior rows
    C = C * (np.max(np.abs(B)) / np.max(np.abs(C)))
    phi = np.zeros(N) if phi0 is None else np.asarray(phi0, dtype=float).ravel().copy()
    c = np.zeros(2)

    def full_residual(phi, c):
        return np.concatenate([disc.residual(phi) - B @ c, C.T @ phi])

    def measure(phi, c, F):
        interior = disc.backward_error(phi, F[:N], extra=np.abs(B) @ np.abs(c))
        constraint = float(np.max(np.abs(F[N:]) / (np.abs(C).T @ np.abs(phi) + 1e-300)))
        return max(interior, min(constraint, 1.0))

    F = full_residual(phi, c)
    res = [measure(phi, c, F)]
    steps = []
    it = 0
    converged = res[-1] <= cfg.newton_tol
    while not converged and it < cfg.max_iter:
        it += 1
        K = _bordered(disc.jacobian(phi), B, C)
        d = _lu(K).solve(-F)
        phi, c = phi + d[:N], c + d[N:]
        F = full_residual(phi, c)
        steps.append(float(np.max(np.abs(d[:N]))))
        res.append(measure(phi, c, F))
        converged = res[-1] <= cfg.newton_tol
    return SolveResult(phi=disc.field(phi), ref=ref, disc=disc, residuals=res, steps=steps,
                       n_iter=it, converged=bool(converged), c=c)


@dataclass
class LinearizedOperator:
    """psi -> -Lap psi - (lambda/4) V(x^(1/2)) e^w psi around a base state w = PW + phi."""

    disc: Discretization
    base_phi: np.ndarray
    lam: float

    @classmethod
    def at_bubble(cls, cfg: SolveConfig, b=0j) -> "LinearizedOperator":
        ref = BubbleParams.from_lambda(cfg.lam, b, cfg.coeffs)
        disc = Discretization(cfg, ref)
        return cls(disc=disc, base_phi=np.zeros(disc.grid.size), lam=cfg.lam)

    @classmethod
    def from_result(cls, result: SolveResult) -> "LinearizedOperator":
        return cls(disc=result.disc, base_phi=result.phi.values.ravel(), lam=result.ref.lam)

    @property
    def weight(self):
        """Multiplier in grid variables: |dx/dy|^2 (lambda/4) V e^w."""
        return self.disc.jac * self.disc.f0 * np.exp(self.base_phi)

    def matrix(self):
        return (self.disc.A - sp.diags(self.weight)).tocsc()


def linearized_min_sv(op: LinearizedOperator, restricted_to_Kperp: bool = True, norm: str = "h1",
                      k: int = 6, lam_zero: bool = False) -> float:
    """Smallest singular value of the linearized operator.

    norm="h1": L = I - (-Lap)^{-1}[f0 e^phi .] on H^1_0, self-adjoint there, so
    the singular values are |mu| for (A - M) psi = mu A psi.  With the
    restriction, psi ranges over the H^1_0 complement of span{PZ^1, PZ^2}.
    norm="l2": -Lap - f0 e^phi on L^2 (for lambda -> 0 this tends to the first
    Dirichlet eigenvalue j_{0,1}^2).  lam_zero drops the multiplier entirely.
    """
    d = op.disc
    A = d.A
    M = sp.diags(np.zeros(d.grid.size) if lam_zero else op.weight)
    N = d.grid.size
    if norm == "h1":
        lhs, rhs = (A - M).tocsc(), A
    elif norm == "l2":
        # symmetrize with the y-weights: -Lap_x psi = mu psi in x  <=>  (A - M) psi = mu J psi
        lhs, rhs = (A - M).tocsc(), sp.diags(d.jac)
    else:
        raise ValueError(f"unknown norm {norm!r}")
    if restricted_to_Kperp:
        C = (d.wx * d.eW)[:, None] * d.Z
        B = (d.jac * d.eW)[:, None] * d.Z
        C = C / np.max(np.abs(C))
        B = B / np.max(np.abs(B))
        K = _bordered(lhs, -B, C)
    else:
        K = lhs
    lu = _lu(K)

    def apply(v):
        rv = rhs @ v
        if restricted_to_Kperp:
            return lu.solve(np.concatenate([rv, np.zeros(2)]))[:N]
        return lu.solve(rv)

    T = spla.LinearOperator((N, N), matvec=apply, dtype=float)
    vals = spla.eigs(T, k=k, which="LM", return_eigenvectors=False, tol=1e-10, maxiter=5000,
                     v0=np.ones(N))
    vals = vals[np.abs(vals) > 0]
    mu = 1.0 / vals
    return float(np.min(np.abs(mu)))


def pull_back(w, x, floor: float = 1e-300):
    """u(x) = w(x^2) - 4 pi G(x, 0) = w(x^2) + 2 log|x| at points x != 0.

    w may be a SolveResult (analytic PW plus interpolated correction), a
    DiskField or any callable of complex points.
    """
    z = as_complex(x)
    if np.any(np.abs(z) <= floor):
        raise ValueError("pull_back is singular at the origin")
    if isinstance(w, SolveResult):
        vals = w.w_at(z * z)
    else:
        vals = w(z * z)
    return vals + 2.0 * np.log(np.abs(z))


def pulled_density(result: SolveResult, x):
    """lambda V(x) e^{u(x)} evaluated through the pulled-back solution."""
    z = as_complex(x)
    c = result.disc.cfg.coeffs
    return result.ref.lam * eval_V(c, z) * np.exp(pull_back(result, z))


def mass(result: SolveResult) -> float:
    """lambda int_{B_1} V e^u = 2 int (lambda/4) V(y^(1/2)) e^w dy, on the solver grid."""
    return 2.0 * result.grid.integrate(result.density())


def radial_fixture(lam: float) -> BubbleParams:
    """Exact radial solution of -Lap w = (lambda/4) e^w: PW with lambda/4 = 8 d^2/(1+d^2)^2 (small branch)."""
    q = lam / 32.0
    if not 0 < q <= 0.25:
        raise ValueError("the radial branch exists for 0 < lambda <= 8")
    # t/(1+t)^2 = q with t = d^2 < 1, in the cancellation-free form
    t = 2 * q / (1 - 2 * q + np.sqrt(1 - 4 * q))
    return BubbleParams(lam=lam, b=0j, delta=float(np.sqrt(t)))


__all__ = [
    "SolveConfig", "SolveResult", "SolverError", "Discretization", "solve_poisson", "newton_solve",
    "projected_solve", "LinearizedOperator", "linearized_min_sv", "pull_back", "mass",
    "radial_fixture", "quadratic_certificate",
]
