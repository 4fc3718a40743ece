"""lambda-sweeps for the non-simple branch and the asymptotic trend checks."""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import least_squares

from .ansatz import BubbleParams, delta_of
from .disk import green_regular, mobius_inverse
from .grid import DiskField
from .potential import PotentialCoeffs, eval_V_half
from .quadrature import rate_fit
from .reduced import hessian_J
from .solver import (
    LinearizedOperator,
    SolveConfig,
    SolveResult,
    linearized_min_sv,
    mass,
    newton_solve,
    projected_solve,
)

log = logging.getLogger(__name__)

CSV_HEADER = ("lambda", "delta", "b1", "b2", "mass", "phi_h1", "min_sv", "n_newton", "converged", "two_maxima")
MASS_TARGET = 16 * np.pi


def scale_of(delta: float) -> float:
    """delta sqrt(log(1/delta)), the scale of the bubble center."""
    return delta * np.sqrt(np.log(1.0 / delta))


# bubble extraction


@dataclass
class BubbleFit:
    params: BubbleParams
    constant: float
    residual: float
    n_points: int
    confident: bool


def fit_bubble(w: DiskField, lam: float = 1.0, level: float = 0.01, threshold: float = 1e-2) -> BubbleFit:
    """Least-squares fit of w to -2 log(delta^2 + |x-b|^2) + 8 pi H(x, b) + const on {e^w >= level max e^w}."""
    vals = w.values.ravel()
    x = w.grid.x.ravel()
    top = np.max(vals)
    mask = vals >= top + np.log(level)
    xs, ws = x[mask], vals[mask]
    k = int(np.argmax(vals))
    b0 = x[k]
    # from the peak height: w(b) ~ -4 log delta + const; start from the core radius instead
    far = xs[np.argmin(ws)]
    d0 = max(abs(far - b0) / np.sqrt(np.sqrt(1 / level) - 1), 1e-12)

    def model(theta, z):
        ld, b1, b2, const = theta
        b = complex(b1, b2)
        return -2 * np.log(np.exp(2 * ld) + np.abs(z - b) ** 2) + 8 * np.pi * green_regular(z, b) + const

    c0 = float(np.mean(ws - model((np.log(d0), b0.real, b0.imag, 0.0), xs)))
    theta0 = np.array([np.log(d0), b0.real, b0.imag, c0])
    sol = least_squares(lambda t: model(t, xs) - ws, theta0, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15,
                        max_nfev=2000, x_scale=np.array([1.0, d0, d0, 1.0]))
    ld, b1, b2, const = sol.x
    rms = float(np.sqrt(np.mean(sol.fun**2)))
    params = BubbleParams(lam=lam, b=complex(b1, b2), delta=float(np.exp(ld)))
    return BubbleFit(params=params, constant=float(const), residual=rms, n_points=int(mask.sum()),
                     confident=bool(rms <= threshold))


# census of local maxima of lambda V e^u


@dataclass
class Census:
    count: int
    locations: list
    radial: bool = False

    @property
    def antipodal_defect(self) -> float:
        if self.count != 2:
            return float("nan")
        return float(abs(self.locations[0] + self.locations[1]))


def maxima_census(result: SolveResult, merge: float = 2.0) -> Census:
    """Local maxima of lambda V e^u in the original variable.

    With y = x^2, lambda V(x) e^{u(x)} = 4 |y| (lambda/4) V(y^(1/2)) e^{w(y)}, so
    every maximum at y != 0 of g(y) = |y| * density gives the pair of maxima
    +-sqrt(y).  Maxima are found on the solver grid with 8-neighbour dominance.
    """
    g_grid = result.grid
    n, m = g_grid.shape
    g = np.abs(g_grid.x) * result.density()
    # pad: row -1 is the reflected first ring, row n the boundary circle
    refl = np.roll(g[0], m // 2)
    xb = mobius_inverse(np.exp(1j * g_grid.theta), g_grid.center)
    coeffs = result.disc.cfg.coeffs
    bnd = np.abs(xb) * result.ref.lam / 4 * np.real(eval_V_half(coeffs, xb))
    P = np.vstack([refl, g, bnd])
    core = P[1:-1]
    is_max = np.ones_like(core, dtype=bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            nb = np.roll(P[1 + di: n + 1 + di], -dj, axis=1)
            is_max &= core > nb
    idx = np.argwhere(is_max)
    pts = [g_grid.x[i, j] for i, j in idx]
    vals = [g[i, j] for i, j in idx]
    spacing = g_grid.spacing_x()
    merged, merged_vals = [], []
    for (i, j), p, v in sorted(zip(idx, pts, vals), key=lambda t: -t[2]):
        if any(abs(p - q) <= merge * spacing[i, j] for q in merged):
            continue
        merged.append(p)
        merged_vals.append(v)
    # a ring maximum around a centered grid shows up as angular flatness
    radial = False
    if abs(g_grid.center) == 0:
        i_top = int(np.argmax(np.max(g, axis=1)))
        row = g[i_top]
        radial = bool((row.max() - row.min()) <= 1e-9 * row.max())
    if radial:
        r = float(np.abs(g_grid.x[i_top, 0]))
        return Census(count=1, locations=[complex(np.sqrt(r), 0.0)], radial=True)
    locs = []
    for p in merged:
        root = np.sqrt(complex(p))
        locs.extend([root, -root])
    return Census(count=len(locs), locations=locs)


def concentration_fraction(result: SolveResult, radius: float = 0.1) -> float:
    """Fraction of lambda int V e^u carried by |x| <= radius (original variable)."""
    dens = result.density()
    inside = np.abs(result.grid.x) <= radius**2
    return float(result.grid.integrate(dens * inside) / result.grid.integrate(dens))


# the non-simple solution at one lambda


@dataclass
class PointSolve:
    projected: SolveResult
    verified: SolveResult
    b: complex
    outer_iter: int
    outer_converged: bool
    history: list


def solve_reduced_point(lam: float, coeffs: PotentialCoeffs, b0, n_r: int = 256, n_theta: int = 128,
                        tol: float = 1e-7, max_iter: int = 20, order: int = 4) -> PointSolve:
    """Find b with c(b) = 0 (the projected equation has no multipliers), then
    confirm with an unprojected Newton solve started from PW_b + phi.

    Broyden iteration on b, started from the Jacobian the reduced field predicts:
    c(b) ~ -3 delta^3 log(1/delta) F(b / (delta sqrt(log 1/delta))).
    """
    cfg = SolveConfig(lam=lam, coeffs=coeffs, n_r=n_r, n_theta=n_theta, order=order)
    b = complex(b0)
    d = delta_of(lam, b, coeffs)
    sc, L = scale_of(d), np.log(1 / d)
    c_scale = 3 * d**3 * L
    Jb = -c_scale / sc * hessian_J((b.real / sc, b.imag / sc), coeffs)
    if abs(np.linalg.det(Jb)) < 1e-14 * c_scale**2 / sc**2:
        Jb = -c_scale / sc * np.eye(2)
    r = projected_solve(cfg, b, check_domain=False)
    history = [(b, r.c.copy())]
    converged = False
    it = 0
    while it < max_iter:
        if np.max(np.abs(r.c)) <= tol * c_scale:
            converged = True
            break
        step = -np.linalg.solve(Jb, r.c)
        if np.hypot(*step) > 0.5 * sc:
            step *= 0.5 * sc / np.hypot(*step)
        it += 1
        b_new = b + complex(*step)
        r_new = projected_solve(cfg, b_new, check_domain=False)
        dc = r_new.c - r.c
        Jb = Jb + np.outer(dc - Jb @ step, step) / float(step @ step)
        b, r = b_new, r_new
        history.append((b, r.c.copy()))
        if np.hypot(*step) <= tol * sc:
            converged = np.max(np.abs(r.c)) <= 1e3 * tol * c_scale
            break
    vcfg = SolveConfig(lam=lam, bubble=r.ref, coeffs=coeffs, n_r=n_r, n_theta=n_theta, order=order,
                       max_iter=8 if converged else 1)
    verified = newton_solve(vcfg, w0=r.w, disc=r.disc)
    return PointSolve(projected=r, verified=verified, b=b, outer_iter=it, outer_converged=bool(converged),
                      history=history)


# sweeps


@dataclass
class SweepRow:
    lam: float
    delta: float
    b: complex
    mass: float
    phi_h1: float
    min_sv: float
    n_newton: int
    converged: bool
    two_maxima: bool
    delta_fit: float = float("nan")
    fit_residual: float = float("nan")
    census_count: int = 0
    antipodal_defect: float = float("nan")
    concentration: float = float("nan")
    c_norm: float = float("nan")

    @property
    def b_tilde(self) -> complex:
        return self.b / scale_of(self.delta)

    def csv_fields(self):
        return (self.lam, self.delta, self.b.real, self.b.imag, self.mass, self.phi_h1, self.min_sv,
                self.n_newton, self.converged, self.two_maxima)


@dataclass
class SweepResult:
    rows: list
    coeffs: PotentialCoeffs
    xi0: tuple

    def __post_init__(self):
        self.rows = sorted(self.rows, key=lambda r: -r.lam)

    def converged_rows(self):
        return [r for r in self.rows if r.converged]

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(CSV_HEADER)
        for r in self.rows:
            wr.writerow([_fmt(v) for v in r.csv_fields()])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, coeffs: PotentialCoeffs, xi0=(1.0, -1.0)) -> "SweepResult":
        rd = csv.reader(io.StringIO(text))
        header = tuple(next(rd))
        if header != CSV_HEADER:
            raise ValueError(f"unexpected CSV header {header}")
        rows = []
        for rec in rd:
            lam, delta, b1, b2, m, ph, sv = (float(v) for v in rec[:7])
            rows.append(SweepRow(lam=lam, delta=delta, b=complex(b1, b2), mass=m, phi_h1=ph, min_sv=sv,
                                 n_newton=int(rec[7]), converged=rec[8] == "True", two_maxima=rec[9] == "True"))
        return cls(rows=rows, coeffs=coeffs, xi0=tuple(xi0))


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def sweep(coeffs: PotentialCoeffs, xi0=(1.0, -1.0), lam_max: float = 1e-2, lam_min: float = 1e-6,
          ratio: float = 0.5, n_r: int = 256, n_theta: int = 128, with_min_sv: bool = False,
          tol: float = 1e-7, newton_tol: float = 1e-11) -> SweepResult:
    """Continuation in lambda (geometric, factor ``ratio``), each step warm-started
    at the previous rescaled center b~ on the new scale delta sqrt(log 1/delta)."""
    if not (0 < ratio < 1 and 0 < lam_min <= lam_max):
        raise ValueError("need 0 < ratio < 1 and 0 < lam_min <= lam_max")
    rows = []
    bt = complex(*xi0)
    lam = lam_max
    while lam >= lam_min * (1 - 1e-12):
        d = delta_of(lam, 0j, coeffs)
        for _ in range(3):  # delta depends weakly on b
            d = delta_of(lam, bt * scale_of(d), coeffs)
        b0 = bt * scale_of(d)
        try:
            ps = solve_reduced_point(lam, coeffs, b0, n_r=n_r, n_theta=n_theta, tol=tol)
        except Exception as exc:  # record the failed row and continue the schedule
            log.warning("lambda=%g failed: %s", lam, exc)
            rows.append(SweepRow(lam=lam, delta=d, b=b0, mass=float("nan"), phi_h1=float("nan"),
                                 min_sv=float("nan"), n_newton=0, converged=False, two_maxima=False))
            lam *= ratio
            continue
        row = summarize(ps, coeffs, newton_tol=newton_tol, with_min_sv=with_min_sv)
        rows.append(row)
        if row.converged:
            bt = row.b_tilde
        lam *= ratio
    return SweepResult(rows=rows, coeffs=coeffs, xi0=tuple(xi0))


def summarize(ps: PointSolve, coeffs: PotentialCoeffs, newton_tol: float = 1e-11,
              with_min_sv: bool = False) -> SweepRow:
    v = ps.verified
    lam = v.ref.lam
    fit = fit_bubble(v.w, lam=lam)
    b_fit = fit.params.b
    census = maxima_census(v)
    min_sv = float("nan")
    if with_min_sv:
        min_sv = linearized_min_sv(LinearizedOperator.from_result(ps.projected), restricted_to_Kperp=True)
    converged = bool(ps.outer_converged and v.converged and v.residuals[-1] <= newton_tol)
    return SweepRow(
        lam=lam,
        delta=delta_of(lam, b_fit, coeffs),
        b=b_fit,
        mass=mass(v),
        phi_h1=ps.projected.phi_h1,
        min_sv=min_sv,
        n_newton=v.n_iter,
        converged=converged,
        two_maxima=bool(census.count == 2),
        delta_fit=fit.params.delta,
        fit_residual=fit.residual,
        census_count=census.count,
        antipodal_defect=census.antipodal_defect,
        concentration=_safe(lambda: concentration_fraction(v)),
        c_norm=float(np.hypot(*ps.projected.c)),
    )


def _safe(fn):
    try:
        return fn()
    except Exception:
        return float("nan")


# trend checks


def scaling_check(s: SweepResult, xi0=None, tol: float = 0.2) -> dict:
    xi0 = complex(*(xi0 if xi0 is not None else s.xi0))
    rows = s.converged_rows()
    if abs(xi0) < 1e-12:
        return {"ok": False, "reason": "xi0 = 0 is not an admissible non-simple target"}
    if len(rows) < 4:
        raise ValueError("scaling_check needs at least 4 converged rows")
    bt = np.array([r.b_tilde for r in rows])
    err = np.abs(bt - xi0) / abs(xi0)
    ratio = np.array([r.delta / abs(r.b) for r in rows])
    terminal = float(err[-1])
    return {
        "b_tilde": [[z.real, z.imag] for z in bt],
        "relative_error": err.tolist(),
        "error_decreasing": bool(np.all(np.diff(err) < 0)),
        "terminal_error": terminal,
        "delta_over_b": ratio.tolist(),
        "delta_over_b_decreasing": bool(np.all(np.diff(ratio) < 0)),
        "ok": bool(terminal <= tol),
    }


def mass_check(s: SweepResult, tol: float = 0.05) -> dict:
    rows = s.converged_rows()
    if not rows:
        return {"ok": False, "reason": "no converged rows"}
    masses = np.array([r.mass for r in rows])
    dev = np.abs(masses - MASS_TARGET) / MASS_TARGET
    conc = [r.concentration for r in rows]
    return {
        "mass": masses.tolist(),
        "relative_deviation": dev.tolist(),
        "terminal_mass": float(masses[-1]),
        "terminal_concentration": float(conc[-1]),
        "ok": bool(dev[-1] <= tol),
    }


def phi_rate(s: SweepResult) -> Optional[dict]:
    rows = [r for r in s.converged_rows() if np.isfinite(r.phi_h1)]
    if len(rows) < 4:
        return None
    fit = rate_fit([(r.delta, r.phi_h1) for r in rows], model="power")
    return {"exponent": fit.exponent, "residual": fit.residual}


def report(s: SweepResult) -> dict:
    out = {
        "potential": s.coeffs.as_dict(),
        "xi0": list(s.xi0),
        "terminal_errors": {},
        "fitted_exponents": {},
        "pass_flags": {},
    }
    rows = s.converged_rows()
    if rows:
        last = rows[-1]
        out["terminal_errors"]["mass_relative"] = abs(last.mass - MASS_TARGET) / MASS_TARGET
        out["pass_flags"]["two_maxima"] = last.two_maxima
    try:
        sc = scaling_check(s)
        out["terminal_errors"]["b_tilde_relative"] = sc.get("terminal_error")
        out["pass_flags"]["b_tilde"] = sc["ok"]
        out["pass_flags"]["delta_over_b_decreasing"] = sc.get("delta_over_b_decreasing", False)
    except ValueError as exc:
        out["pass_flags"]["b_tilde"] = False
        out["terminal_errors"]["b_tilde_relative"] = None
        out["notes"] = str(exc)
    mc = mass_check(s)
    out["pass_flags"]["mass"] = mc["ok"]
    pr = phi_rate(s)
    if pr is not None:
        out["fitted_exponents"]["phi_h1"] = pr["exponent"]
    return out


def report_json(s: SweepResult) -> str:
    return json.dumps(report(s), indent=2, sort_keys=True, default=float)
