"""Quadrature on the disk, annuli and truncated planes, moment identities, rate fits."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import least_squares

from .ansatz import BubbleParams, exp_W, kernel_Z, project_Z, residual_R
from .disk import QuadratureError
from .potential import PotentialCoeffs

PI = np.pi


@dataclass(frozen=True)
class QuadratureSpec:
    """Where and how to integrate.

    domain: "disk" (radius ``R``, default 1), "annulus" (``r1`` < |z| < ``r2``)
    or "plane" (the disk |z| < ``R``; analytic tails are added by callers).
    When ``center``/``scale`` are given, the radial rule is built in polar
    coordinates about ``center`` with geometric panels starting at ``scale``.
    """

    domain: str = "disk"
    n_r: int = 24
    n_theta: int = 128
    rule: str = "tensor"
    tol: float = 1e-10
    r1: float = 0.0
    r2: float = 1.0
    R: float = 1.0
    center: complex = 0j
    scale: Optional[float] = None
    max_doublings: int = 5

    def __post_init__(self):
        if self.n_r < 8 or self.n_theta < 8:
            raise ValueError("node counts must be at least 8")
        if not (0.0 < self.tol <= 1e-2):
            raise ValueError("tol must lie in (0, 1e-2]")
        if self.domain not in ("disk", "annulus", "plane"):
            raise ValueError(f"unknown domain {self.domain!r}")
        if self.rule not in ("tensor", "adaptive"):
            raise ValueError(f"unknown rule {self.rule!r}")

    def bounds(self):
        if self.domain == "annulus":
            return self.r1, self.r2
        if self.domain == "plane":
            return 0.0, self.R
        return 0.0, self.R if self.domain == "disk" and self.R != 1.0 else 1.0


@dataclass
class QuadResult:
    value: float
    error: float
    n_nodes: int


def polar_rule(center, scale, rho_min, outer_radius, n_theta, n_gl, ratio=2.0, lead=4):
    """Nodes/weights for the annulus rho_min < |z| < outer_radius seen from ``center``.

    The radial variable is rho = |z - center|; panels are geometric,
    [scale*ratio^k, scale*ratio^(k+1)], starting ``lead`` panels below ``scale``.
    Returns complex nodes and weights (including the rho Jacobian) as flat arrays.
    """
    c = complex(center)
    theta = 2 * PI * np.arange(n_theta) / n_theta
    e = np.exp(1j * theta)
    proj = (np.conj(c) * e).real
    rho_max = -proj + np.sqrt(proj**2 + outer_radius**2 - abs(c) ** 2)
    if rho_min > 0:
        if abs(c) > 0:
            raise ValueError("inner radius is only supported for rules centred at the origin")
        rho_lo = np.full(n_theta, rho_min)
    else:
        rho_lo = np.zeros(n_theta)
    top = float(np.max(rho_max))
    n_panels = int(np.ceil(np.log(top / scale) / np.log(ratio))) + lead + 1
    bp = np.concatenate([[0.0], scale * ratio ** (np.arange(n_panels) - lead)])
    t, w = np.polynomial.legendre.leggauss(n_gl)
    a = np.clip(bp[:-1][None, :], rho_lo[:, None], rho_max[:, None])
    b = np.clip(bp[1:][None, :], rho_lo[:, None], rho_max[:, None])
    keep = (b - a) > 0
    a, b = a[keep], b[keep]
    th_idx = np.broadcast_to(np.arange(n_theta)[:, None], keep.shape)[keep]
    rho = a[:, None] + (b - a)[:, None] * (t[None, :] + 1) / 2
    wr = (b - a)[:, None] / 2 * w[None, :] * rho * (2 * PI / n_theta)
    nodes = c + rho * e[th_idx][:, None]
    return nodes.ravel(), wr.ravel()


def tensor_rule(r_lo, r_hi, n_r, n_theta):
    t, w = np.polynomial.legendre.leggauss(n_r)
    r = r_lo + (r_hi - r_lo) * (t + 1) / 2
    wr = (r_hi - r_lo) / 2 * w * r
    theta = 2 * PI * np.arange(n_theta) / n_theta
    nodes = r[:, None] * np.exp(1j * theta)[None, :]
    weights = wr[:, None] * np.full(n_theta, 2 * PI / n_theta)[None, :]
    return nodes.ravel(), weights.ravel()


def _rule_for(spec: QuadratureSpec, level: int):
    n_r, n_theta = spec.n_r * 2**level, spec.n_theta * 2**level
    r_lo, r_hi = spec.bounds()
    if spec.scale is not None:
        return polar_rule(spec.center, spec.scale, r_lo, r_hi, n_theta, n_r)
    return tensor_rule(r_lo, r_hi, n_r, n_theta)


def integrate(spec: QuadratureSpec, f: Callable) -> QuadResult:
    """Integrate f(z) (z complex) over the domain described by spec.

    The error estimate is the difference between two levels of node doubling;
    the adaptive rule keeps doubling until it falls below tol * |value|.
    """
    levels = range(spec.max_doublings + 1) if spec.rule == "adaptive" else range(2)
    prev = None
    for level in levels:
        z, w = _rule_for(spec, level)
        vals = np.asarray(f(z), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise QuadratureError("integrand is not finite on the quadrature nodes")
        cur = float(np.sum(w * vals))
        if prev is not None:
            err = abs(cur - prev)
            if spec.rule == "tensor" or err <= spec.tol * max(abs(cur), 1e-300):
                return QuadResult(cur, err, z.size)
        prev = cur
    raise QuadratureError(
        f"no convergence to {spec.tol:g} after {spec.max_doublings} doublings",
        value=cur,
        achieved=err / max(abs(cur), 1e-300),
    )


def integrate_near_bubble(center, scale, f, n_theta=256, n_gl=16, radius=1.0) -> float:
    """Fixed high-order rule on the disk |z| < radius for integrands peaked at center."""
    z, w = polar_rule(center, scale, 0.0, radius, n_theta, n_gl)
    return float(np.sum(w * np.asarray(f(z), dtype=float)))


def bubble_integral(p: BubbleParams, f, n_theta=256, n_gl=16) -> float:
    return integrate_near_bubble(p.b, p.delta, f, n_theta=n_theta, n_gl=n_gl)


# closed forms for integrals of monomials against powers of 1/(1+|z|^2)

KERNEL_KINDS = (
    "z_i^4",
    "z_i^2 z_j^2",
    "z_i^3 z_j",
    "z_i z_j^3",
    "z_i",
    "z_i^2",
    "1",
    "z_i^2 (global, power 3)",
    "z_i^2 (global, power 4)",
)


def kernel_moment_closed_form(kind: str, r: float = np.inf) -> float:
    """Closed forms of int_{|z|<=r} m(z)/(1+|z|^2)^3 dz.

    "z_i^2" is over (1+|z|^2)^3 as well; "1" is the mass of 8/(1+|z|^2)^2 in
    the disk of radius r.  The two global kinds ignore r.
    """
    if kind == "z_i^2 (global, power 3)":
        return PI / 4
    if kind == "z_i^2 (global, power 4)":
        return PI / 12
    if kind in ("z_i^3 z_j", "z_i z_j^3", "z_i"):
        return 0.0
    if not r > 0:
        raise ValueError("radius must be positive")
    if np.isinf(r):
        if kind == "1":
            return 8 * PI
        if kind == "z_i^2":
            return PI / 4
        return np.inf
    u = 1.0 + r * r
    if kind == "z_i^4":
        return 3 / 8 * PI * np.log(u) + 3 / 4 * PI / u - 3 / 16 * PI / u**2 - 9 / 16 * PI
    if kind == "z_i^2 z_j^2":
        return PI / 8 * np.log(u) + PI / 4 / u - PI / 16 / u**2 - 3 / 16 * PI
    if kind == "z_i^2":
        return PI / 2 * (0.5 - 1.0 / u + 0.5 / u**2)
    if kind == "1":
        return 8 * PI * r * r / u
    raise ValueError(f"unknown kind {kind!r}")


_MONOMIALS = {
    "z_i^4": (lambda z: z.real**4, 3),
    "z_i^2 z_j^2": (lambda z: z.real**2 * z.imag**2, 3),
    "z_i^3 z_j": (lambda z: z.real**3 * z.imag, 3),
    "z_i z_j^3": (lambda z: z.real * z.imag**3, 3),
    "z_i": (lambda z: z.real, 3),
    "z_i^2": (lambda z: z.real**2, 3),
    "1": (lambda z: 8.0 + 0 * z.real, 2),
}


def kernel_moment_quadrature(kind: str, r: float = np.inf, n_theta=64, n_gl=20) -> float:
    """Independent numerical value of the kernel moment (for the global kinds,
    the integral up to |z| = 1e4 plus the exact algebraic tail)."""
    if kind.startswith("z_i^2 (global"):
        power = 3 if "power 3" in kind else 4
        R = 1e4
        body = integrate_near_bubble(0j, 1.0, lambda z: z.real**2 / (1 + np.abs(z) ** 2) ** power,
                                     n_theta=n_theta, n_gl=n_gl, radius=R)
        # tail of pi * int_R^inf rho^3/(1+rho^2)^power drho, expanded to two orders
        u = 1 + R * R
        if power == 3:
            tail = PI / 2 * (1 / u - 1 / (2 * u**2))
        else:
            tail = PI / 2 * (1 / (2 * u**2) - 1 / (3 * u**3))
        return body + tail
    mono, power = _MONOMIALS[kind]
    return integrate_near_bubble(0j, 1.0, lambda z: mono(z) / (1 + np.abs(z) ** 2) ** power,
                                 n_theta=n_theta, n_gl=n_gl, radius=r)


def quantization_integral(R: float = 1e4, n_theta=64, n_gl=20) -> float:
    """Plane integral of e^W after z = (x-b)/delta: 8/(1+|z|^2)^2 up to R plus the exact tail."""
    body = integrate_near_bubble(0j, 1.0, lambda z: 8.0 / (1 + np.abs(z) ** 2) ** 2,
                                 n_theta=n_theta, n_gl=n_gl, radius=R)
    return body + 8 * PI / (1 + R * R)


def bubble_moment(p: BubbleParams, gamma: int, n_theta=128, n_gl=16) -> float:
    if gamma not in (0, 1, 2, 3):
        raise ValueError("gamma must be 0, 1, 2 or 3")
    return bubble_integral(p, lambda z: exp_W(p, z) * np.abs(z - p.b) ** gamma, n_theta=n_theta, n_gl=n_gl)


def reduced_projection(p: BubbleParams, c: PotentialCoeffs, i: int, n_theta=256, n_gl=16) -> float:
    """int_{B_1} R_lambda PZ^i dx with the exact projections."""
    if i not in (1, 2):
        raise ValueError("i must be 1 or 2")
    return bubble_integral(p, lambda z: residual_R(p, c, z) * project_Z(i, p, z), n_theta=n_theta, n_gl=n_gl)


def gram_matrix(p: BubbleParams, n_theta=256, n_gl=16) -> np.ndarray:
    """G[h, i] = int Z^h e^W PZ^i for h, i in {1, 2}."""
    G = np.empty((2, 2))
    for h in (1, 2):
        for i in (1, 2):
            G[h - 1, i - 1] = bubble_integral(
                p, lambda z: kernel_Z(h, p, z) * exp_W(p, z) * project_Z(i, p, z), n_theta=n_theta, n_gl=n_gl
            )
    return G


def fold_integral_check(f: Callable, alpha: int, center=None, scale=None, tol=1e-11):
    """Both sides of int |x|^{2(alpha-1)} f(x^alpha) dx = (1/alpha) int f(y) dy over B_1.

    ``center``/``scale`` describe where f is peaked (in the y variable); the two
    sides are computed with unrelated rules so the identity is a real check.
    """
    if alpha < 1:
        raise ValueError("alpha must be a positive integer")
    if center is None:
        rhs = integrate(QuadratureSpec(n_r=32, n_theta=64, rule="adaptive", tol=tol), f).value
        lhs_spec = QuadratureSpec(n_r=32, n_theta=64 * alpha, rule="adaptive", tol=tol)
        lhs = integrate(lhs_spec, lambda x: np.abs(x) ** (2 * (alpha - 1)) * f(x**alpha)).value
        return lhs, rhs / alpha
    center = complex(center)
    rhs = integrate_near_bubble(center, scale, f, n_theta=256, n_gl=24)
    # in x the peaks sit at the alpha roots of center, on the circle |x| = r_star;
    # Gauss panels in r and theta, graded geometrically toward them
    r_star = abs(center) ** (1.0 / alpha)
    s_star = scale / (alpha * max(r_star, scale ** (1.0 / alpha)) ** (alpha - 1))
    r_edges = _graded_edges(0.0, 1.0, r_star, s_star / 4)
    t0 = np.angle(center) / alpha
    half = PI / alpha
    h_t = s_star / (4 * max(r_star, s_star))
    t_edges = _graded_edges(t0 - half, t0 + half, t0, h_t) if h_t < half else np.linspace(t0 - half, t0 + half, 9)
    rr, wr = _panel_gauss(r_edges, 16)
    tt, wt = _panel_gauss(t_edges, 16)
    lhs = 0.0
    for k in range(alpha):
        z = rr[:, None] * np.exp(1j * (tt[None, :] + 2 * PI * k / alpha))
        g = np.abs(z) ** (2 * (alpha - 1)) * f(z**alpha)
        lhs += float(np.sum((wr * rr)[:, None] * wt[None, :] * g))
    return lhs, rhs / alpha


def _graded_edges(a, b, c, h, ratio=2.0):
    """Panel edges on [a, b], smallest (width h) at c and growing geometrically away from it."""
    c = min(max(c, a), b)
    left, right = [c], [c]
    w = h
    while left[-1] > a:
        left.append(max(left[-1] - w, a))
        w *= ratio
    w = h
    while right[-1] < b:
        right.append(min(right[-1] + w, b))
        w *= ratio
    return np.unique(np.array(left[::-1] + right[1:]))


def _panel_gauss(edges, n):
    t, w = np.polynomial.legendre.leggauss(n)
    a, b = edges[:-1, None], edges[1:, None]
    return ((a + b) / 2 + (b - a) / 2 * t).ravel(), ((b - a) / 2 * w).ravel()


@dataclass
class RateFit:
    model: str
    exponent: float
    constants: tuple
    residual: float
    deltas: np.ndarray = field(repr=False)
    dropped: int = 0

    def predict(self, delta):
        d = np.asarray(delta, dtype=float)
        if self.model == "power":
            return self.constants[0] * d**self.exponent
        c1, c2 = self.constants
        return d**self.exponent * (c1 * np.log(1 / d) + c2)


def _fit_once(d, v, model):
    ld, lv = np.log(d), np.log(np.abs(v))
    X = np.column_stack([np.ones_like(ld), ld])
    if np.linalg.matrix_rank(X) < 2:
        raise np.linalg.LinAlgError("degenerate design matrix")
    (lc, a), *_ = np.linalg.lstsq(X, lv, rcond=None)
    if model == "power":
        res = lv - (lc + a * ld)
        return a, (float(np.exp(lc) * np.sign(v[0])),), float(np.sqrt(np.mean(res**2)))
    L = np.log(1 / d)
    sgn = np.sign(v[0])

    def resid(theta):
        a_, c1, c2 = theta
        model_v = d**a_ * (c1 * L + c2)
        return np.log(np.abs(model_v) + 1e-300) - lv

    start = np.array([a, np.exp(lc) * sgn / np.mean(L), 0.0])
    sol = least_squares(resid, start, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=20000)
    a_, c1, c2 = sol.x
    return float(a_), (float(c1), float(c2)), float(np.sqrt(np.mean(sol.fun**2)))


def rate_fit(values, model: str = "power", drop_threshold: float = 1e-2) -> RateFit:
    """Fit v(delta) to c*delta^a ("power") or delta^a (c1 log(1/delta) + c2) ("power_log").

    values: sequence of (delta, v) with delta decreasing.  While the rms log
    residual exceeds ``drop_threshold`` and more than 4 samples remain, the
    largest delta is discarded as pre-asymptotic.
    """
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 4:
        raise ValueError("rate_fit needs at least 4 samples")
    d, v = arr[:, 0], arr[:, 1]
    if np.any(np.diff(d) >= 0):
        raise ValueError("delta samples must be strictly decreasing")
    if model not in ("power", "power_log"):
        raise ValueError(f"unknown model {model!r}")
    dropped = 0
    while True:
        a, consts, res = _fit_once(d, v, model)
        if res <= drop_threshold or d.size <= 4:
            break
        d, v = d[1:], v[1:]
        dropped += 1
    return RateFit(model=model, exponent=a, constants=consts, residual=res, deltas=d, dropped=dropped)
