"""Green's function of the unit disk, complex power maps, and harmonic extension.

Points are accepted either as complex numbers or as real arrays whose last
axis has length 2.  Scalar fields come back as float arrays with the
broadcast shape of the inputs.
"""

from __future__ import annotations

import numpy as np

TWO_PI = 2.0 * np.pi
COINCIDENT_FLOOR = 1e-14


class CoincidentPointsError(ValueError):
    pass


class QuadratureError(RuntimeError):
    """Raised when a quadrature does not reach its target; carries the best value."""

    def __init__(self, message, value=None, achieved=None):
        super().__init__(message)
        self.value = value
        self.achieved = achieved


def as_complex(p) -> np.ndarray:
    a = np.asarray(p)
    if np.iscomplexobj(a):
        return a.astype(complex)
    a = a.astype(float)
    if a.shape[-1:] != (2,):
        raise ValueError(f"expected points with a trailing axis of length 2, got shape {a.shape}")
    return a[..., 0] + 1j * a[..., 1]


def as_pairs(z) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    return np.stack([z.real, z.imag], axis=-1)


def green_regular(x, y):
    """Regular part H(x, y) of the Dirichlet Green's function of the unit disk.

    Uses (1/4pi) log(1 + |x|^2 |y|^2 - 2 x.y), which is the same function as
    (1/2pi) log(|x| |y - x/|x|^2|) but has no removable singularity at x = 0.
    """
    zx, zy = as_complex(x), as_complex(y)
    t = np.abs(zx) ** 2 * np.abs(zy) ** 2 - 2.0 * (zx.real * zy.real + zx.imag * zy.imag)
    with np.errstate(divide="ignore"):
        return np.log1p(t) / (2.0 * TWO_PI)


def green(x, y, floor: float = COINCIDENT_FLOOR):
    zx, zy = as_complex(x), as_complex(y)
    d = np.abs(zx - zy)
    if np.any(d < floor):
        raise CoincidentPointsError(f"|x - y| = {np.min(d):.3g} is below the floor {floor:g}")
    return -np.log(d) / TWO_PI + green_regular(zx, zy)


def robin(x):
    """H(x, x) = (1/2pi) log(1 - |x|^2); -inf on the boundary circle."""
    z = as_complex(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log1p(-np.abs(z) ** 2) / TWO_PI
    return np.where(np.abs(z) >= 1.0, -np.inf, out)


def fold_map(x, alpha: int):
    """Complex power x -> x**alpha; returns the same representation as the input."""
    if alpha < 1:
        raise ValueError("alpha must be a positive integer")
    complex_in = np.iscomplexobj(np.asarray(x))
    z = as_complex(x) ** int(alpha)
    return z if complex_in else as_pairs(z)


def unfold_roots(y, alpha: int):
    """All alpha complex alpha-th roots of y, stacked along a new leading axis."""
    if alpha < 1:
        raise ValueError("alpha must be a positive integer")
    complex_in = np.iscomplexobj(np.asarray(y))
    z = as_complex(y)
    principal = np.abs(z) ** (1.0 / alpha) * np.exp(1j * np.angle(z) / alpha)
    roots = np.stack([principal * np.exp(2j * np.pi * k / alpha) for k in range(alpha)])
    return roots if complex_in else as_pairs(roots)


def mobius(x, a):
    """Disk automorphism sending a to 0."""
    z, a = as_complex(x), complex(a)
    return (z - a) / (1.0 - np.conj(a) * z)


def mobius_inverse(y, a):
    z, a = np.asarray(y, dtype=complex), complex(a)
    return (z + a) / (1.0 + np.conj(a) * z)


def mobius_jacobian(y, a):
    """|dx/dy|^2 for x = mobius_inverse(y, a)."""
    z, a = np.asarray(y, dtype=complex), complex(a)
    return (1.0 - abs(a) ** 2) ** 2 / np.abs(1.0 + np.conj(a) * z) ** 4


class HarmonicExtension:
    """Harmonic function in the unit disk from the Fourier data of its boundary trace.

    value(z) = a_0 + 2 Re sum_{k>=1} a_k z^k, which is exact for the trapezoidal
    samples of a real trace; smooth traces give spectrally small aliasing.
    """

    def __init__(self, coeffs: np.ndarray, achieved: float = 0.0):
        self.coeffs = np.asarray(coeffs, dtype=complex)
        self.achieved = achieved

    @classmethod
    def from_trace(cls, trace, n_nodes: int = 512, tol: float = 1e-13, rtol_floor: float = 1e-300):
        """trace: callable of complex boundary points returning real values."""
        theta = TWO_PI * np.arange(n_nodes) / n_nodes
        g = np.asarray(trace(np.exp(1j * theta)), dtype=float)
        a = np.fft.fft(g) / n_nodes
        half = a[: n_nodes // 2]
        scale = max(np.max(np.abs(half)), rtol_floor)
        # tail over the last eighth of the resolved band measures aliasing
        tail = np.max(np.abs(half[-max(2, n_nodes // 16):])) / scale
        if tail > tol:
            raise QuadratureError(
                f"boundary trace under-resolved with {n_nodes} nodes (tail {tail:.2e})",
                achieved=tail,
            )
        keep = np.nonzero(np.abs(half) > 1e-18 * scale)[0]
        k_max = int(keep[-1]) + 1 if keep.size else 1
        return cls(half[:k_max], achieved=tail)

    def __call__(self, x) -> np.ndarray:
        z = as_complex(x)
        c = self.coeffs
        acc = np.zeros_like(z)
        for k in range(len(c) - 1, 0, -1):
            acc = (acc + c[k]) * z
        return c[0].real + 2.0 * acc.real
