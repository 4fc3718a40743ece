"""The reduced vector field F = grad J, its zeros, degree and critical-point type."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .potential import PotentialCoeffs


class DegreeUndefinedError(ValueError):
    pass


def _coeffs(c: PotentialCoeffs):
    D0, D1, D2, D3 = c.D0, c.D1, c.D2, c.D3
    # J = k30 x^3 + k21 x^2 y + k12 x y^2 + k03 y^3 + l1 x + l2 y
    return (
        D0,
        D1 / 2,
        (3 * D0 - D2) / 4,
        (2 * D1 + D3) / 8,
        (15 * D0 - D2) / 4,
        (10 * D1 + 3 * D3) / 8,
    )


def _split(xi):
    a = np.asarray(xi, dtype=float)
    return a[..., 0], a[..., 1]


def eval_J(xi, c: PotentialCoeffs):
    x, y = _split(xi)
    k30, k21, k12, k03, l1, l2 = _coeffs(c)
    return k30 * x**3 + k21 * x**2 * y + k12 * x * y**2 + k03 * y**3 + l1 * x + l2 * y


def eval_F(xi, c: PotentialCoeffs) -> np.ndarray:
    x, y = _split(xi)
    k30, k21, k12, k03, l1, l2 = _coeffs(c)
    f1 = 3 * k30 * x**2 + 2 * k21 * x * y + k12 * y**2 + l1
    f2 = k21 * x**2 + 2 * k12 * x * y + 3 * k03 * y**2 + l2
    return np.stack([f1, f2], axis=-1)


def hessian_J(xi, c: PotentialCoeffs) -> np.ndarray:
    x, y = _split(xi)
    k30, k21, k12, k03, _, _ = _coeffs(c)
    hxx = 6 * k30 * x + 2 * k21 * y
    hxy = 2 * k21 * x + 2 * k12 * y
    hyy = 2 * k12 * x + 6 * k03 * y
    return np.array([[hxx, hxy], [hxy, hyy]], dtype=float)


def classify(c: PotentialCoeffs, xi, det_floor: float = 1e-10):
    eigs = np.linalg.eigvalsh(hessian_J(xi, c))
    if abs(eigs[0] * eigs[1]) < det_floor:
        label = "degenerate"
    elif eigs[0] > 0:
        label = "min"
    elif eigs[1] < 0:
        label = "max"
    else:
        label = "saddle"
    return (float(eigs[0]), float(eigs[1])), label


def brouwer_degree(c: PotentialCoeffs, center, radius: float, n_samples: int = 720,
                   floor: float = 1e-9, max_refine: int = 12, return_min: bool = False):
    """Winding number of F around 0 along the circle |xi - center| = radius."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    cx, cy = (float(v) for v in center)

    def field_at(t):
        pts = np.stack([cx + radius * np.cos(t), cy + radius * np.sin(t)], axis=-1)
        f = eval_F(pts, c)
        return f[..., 0] + 1j * f[..., 1]

    t = np.linspace(0.0, 2 * np.pi, n_samples + 1)
    for _ in range(max_refine):
        f = field_at(t)
        fmin = float(np.min(np.abs(f)))
        if fmin < floor:
            raise DegreeUndefinedError(f"|F| = {fmin:.3g} on the circle; degree undefined")
        jumps = np.angle(f[1:] / f[:-1])
        big = np.abs(jumps) > np.pi / 2
        if not np.any(big):
            break
        mids = 0.5 * (t[:-1] + t[1:])[big]
        t = np.sort(np.concatenate([t, mids]))
    else:
        raise DegreeUndefinedError("argument jumps stay above pi/2 after refinement")
    total = float(np.sum(jumps)) / (2 * np.pi)
    deg = int(round(total))
    if abs(total - deg) >= 0.1:
        raise DegreeUndefinedError(f"winding number {total:.3f} is not close to an integer")
    return (deg, fmin) if return_min else deg


@dataclass
class ReducedZero:
    xi: tuple
    residual: float
    degree: int
    hessian_eigs: tuple
    label: str = ""

    @property
    def stable(self) -> bool:
        return self.degree != 0

    @property
    def at_origin(self) -> bool:
        return float(np.hypot(*self.xi)) < 1e-6


class ZeroSearch(list):
    """List of ReducedZero with search diagnostics attached."""

    def __init__(self, items=()):
        super().__init__(items)
        self.degenerate_field = False
        self.skipped_singular = 0
        self.not_converged = 0
        self.notes = []


def _newton(xi, c, tol, max_iter=60):
    x = np.array(xi, dtype=float)
    for _ in range(max_iter):
        f = eval_F(x, c)
        if np.hypot(*f) <= tol:
            return x, "ok"
        Jm = hessian_J(x, c)
        if abs(np.linalg.det(Jm)) < 1e-14:
            return x, "singular"
        x = x - np.linalg.solve(Jm, f)
        if not np.all(np.isfinite(x)) or np.hypot(*x) > 1e8:
            return x, "diverged"
    return x, "ok" if np.hypot(*eval_F(x, c)) <= tol else "diverged"


def find_zeros(c: PotentialCoeffs, box=((-3.0, 3.0), (-3.0, 3.0)), n_starts: int = 20,
               tol: float = 1e-12, degree_radius: float = 0.1) -> ZeroSearch:
    """Multi-start Newton inside ``box``; zeros merged within 1e3*tol, in seed order."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    (x0, x1), (y0, y1) = box
    if not all(np.isfinite([x0, x1, y0, y1])):
        raise ValueError("box must be bounded")
    out = ZeroSearch()
    if all(getattr(c, n) == 0 for n in ("D0", "D1", "D2", "D3")):
        out.degenerate_field = True
        out.notes.append("F vanishes identically; zeros are not isolated")
        return out
    found = []
    for sx in np.linspace(x0, x1, n_starts):
        for sy in np.linspace(y0, y1, n_starts):
            x, status = _newton((sx, sy), c, tol)
            if status == "singular":
                out.skipped_singular += 1
                continue
            if status != "ok":
                out.not_converged += 1
                continue
            if not (x0 <= x[0] <= x1 and y0 <= x[1] <= y1):
                continue
            # Newton is only linear at a degenerate zero, so the iterates scatter
            # over ~sqrt(tol); those are merged on that wider radius
            _, label = classify(c, x)
            radius = 1e3 * tol if label != "degenerate" else 1e3 * np.sqrt(tol)
            if any(np.hypot(*(x - y)) <= radius for y in found):
                continue
            found.append(x)
    for x in found:
        eigs, label = classify(c, x)
        res = float(np.hypot(*eval_F(x, c)))
        try:
            deg = brouwer_degree(c, x, degree_radius)
        except DegreeUndefinedError:
            deg = 0
            out.notes.append(f"degree undefined at {tuple(x)}")
        z = ReducedZero(xi=(float(x[0]), float(x[1])), residual=res, degree=deg, hessian_eigs=eigs, label=label)
        if z.at_origin:
            out.notes.append("zero at the origin: not admissible as a blow-up profile")
        out.append(z)
    return out
