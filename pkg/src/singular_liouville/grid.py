"""Polar grids on the unit disk recentred by a Mobius map, and fields sampled on them.

The grid lives in a variable y with x = mobius_inverse(y, center), so the
bubble center sits at the pole.  Radially, nodes are s_i = (i + 1/2)/n and
r = sinh(kappa s)/sinh(kappa); the pole is handled by reflection,
u(-r, theta) = u(r, theta + pi), which keeps all stencils centered there.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .disk import as_complex, mobius, mobius_inverse, mobius_jacobian

DSKF_MAGIC = b"DSKF"
DSKF_VERSION = 1
_HEADER = struct.Struct("<4sIIIddddI")  # 52 bytes, padded to 64


def fornberg(z: float, x, m: int) -> np.ndarray:
    """Finite difference weights at z for derivatives 0..m on nodes x (Fornberg's recursion)."""
    x = np.asarray(x, dtype=float)
    n = x.size
    c = np.zeros((n, m + 1))
    c1, c4 = 1.0, x[0] - z
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2, c5, c4 = 1.0, c4, x[i] - z
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c.T


def _end_corrected_midpoint(n: int, m: int = 6) -> np.ndarray:
    """Weights for int_0^1 g(s) ds on s_i = (i+1/2)/n.

    Midpoint rule plus the first two Euler-Maclaurin end terms, with the end
    derivatives taken from one-sided stencils on the m nodes nearest each end.
    """
    h = 1.0 / n
    w = np.full(n, h)
    m = min(m, n)
    s = (np.arange(m) + 0.5) * h
    c = fornberg(0.0, s, 3)
    # B_2(1/2) = -1/12, B_4(1/2) = 7/240
    left = (-1.0 / 12) * h**2 / 2 * c[1] + (7.0 / 240) * h**4 / 24 * c[3]
    # right end: g'(1) stencil is the mirror of g'(0) with odd sign
    w[:m] += left
    w[-m:] += left[::-1]
    return w


def _choose_kappa(n_r: int, delta: float, core: float) -> float:
    """kappa with central spacing ~ delta/core, or 0 (uniform) when that is already met."""
    target = n_r * delta / core
    if target >= 1.0:
        return 0.0
    lo, hi = 1e-8, 60.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid / np.sinh(mid) > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


class PolarGrid:
    def __init__(self, n_r: int, n_theta: int, center=0j, kappa: float = 0.0, order: int = 4):
        if n_r < 8 or n_theta < 8 or n_theta % 2:
            raise ValueError("need n_r >= 8 and an even n_theta >= 8")
        if order not in (2, 4, 6):
            raise ValueError("order must be 2, 4 or 6")
        center = complex(center)
        if abs(center) >= 1:
            raise ValueError("grid center must lie inside the disk")
        self.n_r, self.n_theta = int(n_r), int(n_theta)
        self.center, self.kappa, self.order = center, float(kappa), int(order)
        self.h = 1.0 / n_r
        self.s = (np.arange(n_r) + 0.5) * self.h
        self.r, self.dr, self.d2r = self._radial_map(self.s)
        self.theta = 2 * np.pi * np.arange(n_theta) / n_theta
        self.y = self.r[:, None] * np.exp(1j * self.theta)[None, :]
        self.x = mobius_inverse(self.y, center)
        self.jac = mobius_jacobian(self.y, center)
        ws = _end_corrected_midpoint(n_r)
        self.weights_y = (ws * self.r * self.dr)[:, None] * np.full(n_theta, 2 * np.pi / n_theta)[None, :]
        self.weights_x = self.weights_y * self.jac
        self._lap = None
        self._grad = None

    @classmethod
    def for_bubble(cls, n_r, n_theta, center, delta, core: float = 8.0, order: int = 4, n_ref: int = 256):
        """Grid whose radial map puts ``core`` nodes per bubble radius at n_r = n_ref.

        The map depends on delta only, so changing n_r refines uniformly in s.
        """
        # the bubble scale seen in y is delta/(1-|center|^2)
        d_y = delta / (1.0 - abs(complex(center)) ** 2)
        return cls(n_r, n_theta, center=center, kappa=_choose_kappa(n_ref, d_y, core), order=order)

    def _radial_map(self, s):
        k = self.kappa
        if k == 0.0:
            return s.copy(), np.ones_like(s), np.zeros_like(s)
        sk = np.sinh(k)
        return np.sinh(k * s) / sk, k * np.cosh(k * s) / sk, k * k * np.sinh(k * s) / sk

    def s_of_r(self, r):
        if self.kappa == 0.0:
            return np.asarray(r, dtype=float)
        return np.arcsinh(np.asarray(r) * np.sinh(self.kappa)) / self.kappa

    @property
    def shape(self):
        return (self.n_r, self.n_theta)

    @property
    def size(self):
        return self.n_r * self.n_theta

    def spacing_x(self) -> np.ndarray:
        """Local node spacing in the physical variable (max of radial and angular)."""
        scale = np.sqrt(self.jac)
        hr = self.dr[:, None] * self.h * scale
        ht = self.r[:, None] * (2 * np.pi / self.n_theta) * scale
        return np.maximum(hr, ht)

    # stencils

    def _radial_stencils(self):
        """Per radial node: list of (virtual index, weight_d1, weight_d2).

        Virtual index k < 0 denotes node -k-1 across the pole; k = n_r the boundary."""
        n, h, p = self.n_r, self.h, self.order
        half = p // 2
        out = []
        for i in range(n):
            if i + half <= n - 1:
                ks = np.arange(i - half, i + half + 1)
                pos = (ks + 0.5) * h
            else:
                ks = np.concatenate([np.arange(n - p - 1, n), [n]])
                pos = np.concatenate([(np.arange(n - p - 1, n) + 0.5) * h, [1.0]])
            c = fornberg(self.s[i], pos, 2)
            out.append((ks, c[1], c[2]))
        return out

    def _angular_weights(self):
        p = self.order
        half = p // 2
        offs = np.arange(-half, half + 1)
        dt = 2 * np.pi / self.n_theta
        c = fornberg(0.0, offs * dt, 2)
        return offs, c[1], c[2]

    def _idx(self, i, j):
        return i * self.n_theta + (j % self.n_theta)

    def laplacian(self) -> sp.csr_matrix:
        """Delta_y on interior unknowns (zero Dirichlet data), rows/cols flattened (r, theta)."""
        if self._lap is not None:
            return self._lap
        n, m = self.n_r, self.n_theta
        rows, cols, vals = [], [], []
        jj = np.arange(m)
        for i, (ks, w1, w2) in enumerate(self._radial_stencils()):
            r, dr, d2r = self.r[i], self.dr[i], self.d2r[i]
            coef = w2 / dr**2 + w1 * (1.0 / (r * dr) - d2r / dr**3)
            for k, a in zip(ks, coef):
                if k >= n:
                    continue
                if k < 0:
                    ii, shift = -k - 1, m // 2
                else:
                    ii, shift = k, 0
                rows.append(i * m + jj)
                cols.append(ii * m + (jj + shift) % m)
                vals.append(np.full(m, a))
        offs, _, a2 = self._angular_weights()
        for i in range(n):
            for o, a in zip(offs, a2):
                rows.append(i * m + jj)
                cols.append(i * m + (jj + o) % m)
                vals.append(np.full(m, a / self.r[i] ** 2))
        A = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n * m, n * m)
        ).tocsr()
        A.sum_duplicates()
        self._lap = A
        return A

    def gradient_matrices(self):
        """Sparse (d/dr, (1/r) d/dtheta) in y, zero Dirichlet data."""
        if self._grad is not None:
            return self._grad
        n, m = self.n_r, self.n_theta
        jj = np.arange(m)
        rows, cols, vals = [], [], []
        for i, (ks, w1, _) in enumerate(self._radial_stencils()):
            for k, a in zip(ks, w1 / self.dr[i]):
                if k >= n:
                    continue
                ii, shift = (-k - 1, m // 2) if k < 0 else (k, 0)
                rows.append(i * m + jj)
                cols.append(ii * m + (jj + shift) % m)
                vals.append(np.full(m, a))
        Dr = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                           shape=(n * m, n * m)).tocsr()
        offs, a1, _ = self._angular_weights()
        rows, cols, vals = [], [], []
        for i in range(n):
            for o, a in zip(offs, a1):
                rows.append(i * m + jj)
                cols.append(i * m + (jj + o) % m)
                vals.append(np.full(m, a / self.r[i]))
        Dt = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                           shape=(n * m, n * m)).tocsr()
        self._grad = (Dr, Dt)
        return self._grad

    # quadrature and norms

    def integrate(self, values, measure: str = "x") -> float:
        w = self.weights_x if measure == "x" else self.weights_y
        return float(np.sum(w * np.asarray(values, dtype=float)))

    def dirichlet_energy(self, values) -> float:
        """int |grad u|^2, which is the same in x and y (conformal invariance)."""
        Dr, Dt = self.gradient_matrices()
        u = np.asarray(values, dtype=float).ravel()
        g2 = (Dr @ u) ** 2 + (Dt @ u) ** 2
        return float(np.sum(self.weights_y.ravel() * g2))

    # interpolation

    def interpolate(self, values, x, npts: int = 6) -> np.ndarray:
        """Tensor Lagrange interpolation of grid values at physical points x (zero on the circle)."""
        V = np.asarray(values, dtype=float).reshape(self.shape)
        z = np.atleast_1d(as_complex(x)).ravel()
        yq = mobius(z, self.center)
        rq = np.abs(yq)
        tq = np.mod(np.angle(yq), 2 * np.pi)
        sq = self.s_of_r(rq)
        n, m, h = self.n_r, self.n_theta, self.h
        half = npts // 2
        i0 = np.floor(sq / h - 0.5).astype(int)
        ks = i0[:, None] + np.arange(-half + 1, half + 1)[None, :]
        pos = (ks + 0.5) * h
        near_edge = ks[:, -1] > n - 1
        if np.any(near_edge):
            edge_k = np.concatenate([np.arange(n - npts + 1, n), [n]])
            ks[near_edge] = edge_k
            pos[near_edge] = np.concatenate([(np.arange(n - npts + 1, n) + 0.5) * h, [1.0]])
        wr = _lagrange_weights(pos, sq)
        # angular interpolation for each radial point (reflected ones are at theta + pi)
        shift = np.where(ks < 0, np.pi, 0.0)
        ii = np.where(ks < 0, -ks - 1, np.minimum(ks, n - 1))
        tt = np.mod(tq[:, None] + shift, 2 * np.pi)
        dt = 2 * np.pi / m
        j0 = np.floor(tt / dt).astype(int)
        offs = np.arange(-half + 1, half + 1)
        jj = j0[..., None] + offs
        tpos = jj * dt
        wt = _lagrange_weights(tpos, tt)
        vals = V[ii[..., None], np.mod(jj, m)]
        radial_vals = np.sum(wt * vals, axis=-1)
        radial_vals = np.where(ks >= n, 0.0, radial_vals)
        out = np.sum(wr * radial_vals, axis=-1)
        return out.reshape(np.shape(as_complex(x)))


def _lagrange_weights(nodes, t):
    """Lagrange basis weights; nodes (..., k), t (...)."""
    nodes = np.asarray(nodes, dtype=float)
    t = np.asarray(t, dtype=float)[..., None]
    k = nodes.shape[-1]
    w = np.ones(nodes.shape)
    for a in range(k):
        for b in range(k):
            if a != b:
                w[..., a] *= (t[..., 0] - nodes[..., b]) / (nodes[..., a] - nodes[..., b])
    return w


@dataclass
class DiskField:
    grid: PolarGrid
    values: np.ndarray
    boundary_value: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(self.grid.shape)

    @property
    def n_r(self):
        return self.grid.n_r

    @property
    def n_theta(self):
        return self.grid.n_theta

    def __call__(self, x):
        return self.grid.interpolate(self.values, x) + self.boundary_value

    def to_bytes(self) -> bytes:
        g = self.grid
        head = _HEADER.pack(DSKF_MAGIC, DSKF_VERSION, g.n_r, g.n_theta, self.boundary_value,
                            g.center.real, g.center.imag, g.kappa, g.order)
        head = head + b"\0" * (64 - len(head))
        return head + np.ascontiguousarray(self.values, dtype="<f8").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "DiskField":
        if len(data) < 64:
            raise ValueError("truncated DSKF header")
        magic, version, n_r, n_theta, bval, cre, cim, kappa, order = _HEADER.unpack(data[: _HEADER.size])
        if magic != DSKF_MAGIC:
            raise ValueError("not a DSKF container")
        if version != DSKF_VERSION:
            raise ValueError(f"unsupported DSKF version {version}")
        body = np.frombuffer(data[64:], dtype="<f8")
        if body.size != n_r * n_theta:
            raise ValueError("DSKF payload size does not match header")
        grid = PolarGrid(n_r, n_theta, center=complex(cre, cim), kappa=kappa, order=order)
        return cls(grid, body.reshape(n_r, n_theta).copy(), boundary_value=bval)

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "DiskField":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())

    def to_csv(self, path):
        """Rows (r, theta, value) in the physical variable."""
        x = self.grid.x.ravel()
        table = np.column_stack([np.abs(x), np.mod(np.angle(x), 2 * np.pi), self.values.ravel()])
        np.savetxt(path, table, delimiter=",", header="r,theta,value", comments="", fmt="%.17g")
