"""Bubble ansatz: scale calibration, Dirichlet projections, kernel functions, residual."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .disk import HarmonicExtension, as_complex, green_regular
from .potential import PotentialCoeffs, eval_V_half, v_half_minus_one

TRACE_NODES = 512


@dataclass(frozen=True)
class BubbleParams:
    lam: float
    b: complex
    delta: float

    @property
    def mu_sq(self) -> float:
        return self.delta

    @classmethod
    def from_lambda(cls, lam: float, b, c: PotentialCoeffs) -> "BubbleParams":
        b = complex(as_complex(b))
        return cls(lam=float(lam), b=b, delta=delta_of(lam, b, c))

    @classmethod
    def from_delta(cls, delta: float, b, c: PotentialCoeffs) -> "BubbleParams":
        """Inverse calibration: the lambda for which delta_of(lambda, b) = delta."""
        b = complex(as_complex(b))
        lam = 32.0 * delta**2 / (float(eval_V_half(c, b)) * (1.0 - abs(b) ** 2) ** 4)
        return cls(lam=lam, b=b, delta=float(delta))

    @property
    def b_pair(self) -> tuple:
        return (self.b.real, self.b.imag)


def delta_of(lam: float, b, c: PotentialCoeffs) -> float:
    if lam <= 0:
        raise ValueError("lambda must be positive")
    b = complex(as_complex(b))
    if abs(b) >= 1:
        raise ValueError("bubble center must lie inside the unit disk")
    return float(np.sqrt(lam / 32.0 * float(eval_V_half(c, b)) * (1.0 - abs(b) ** 2) ** 4))


def _dist2(p: BubbleParams, z):
    return np.abs(z - p.b) ** 2


def exp_W(p: BubbleParams, x):
    z = as_complex(x)
    d2 = p.delta**2
    return 8.0 * d2 / (d2 + _dist2(p, z)) ** 2


def bubble_W(p: BubbleParams, x):
    z = as_complex(x)
    d2 = p.delta**2
    return np.log(8.0 * d2) - 2.0 * np.log(d2 + _dist2(p, z))


def kernel_Z(j: int, p: BubbleParams, x):
    z = as_complex(x)
    d2 = p.delta**2
    r2 = _dist2(p, z)
    if j == 0:
        return (d2 - r2) / (d2 + r2)
    if j == 1:
        return p.delta * (z.real - p.b.real) / (d2 + r2)
    if j == 2:
        return p.delta * (z.imag - p.b.imag) / (d2 + r2)
    raise ValueError("kernel index must be 0, 1 or 2")


# boundary-correction harmonic functions, cached per bubble


@lru_cache(maxsize=256)
def _w_correction(delta: float, b: complex, n_nodes: int) -> HarmonicExtension:
    # harmonic g with g = 2 log(1 + delta^2/|x-b|^2) on the circle
    return HarmonicExtension.from_trace(
        lambda s: 2.0 * np.log1p(delta**2 / np.abs(s - b) ** 2), n_nodes=n_nodes
    )


@lru_cache(maxsize=256)
def _z_extension(j: int, delta: float, b: complex, n_nodes: int) -> HarmonicExtension:
    p = BubbleParams(lam=1.0, b=b, delta=delta)
    return HarmonicExtension.from_trace(lambda s: kernel_Z(j, p, s), n_nodes=n_nodes)


def w_correction_closed(p: BubbleParams, x):
    """Closed form of the harmonic function g above (reflection of |x-q|)."""
    z = as_complex(x)
    b, d2 = p.b, p.delta**2
    nb2 = abs(b) ** 2
    A1 = nb2 + d2  # A - 1 with A = 1 + |b|^2 + delta^2
    root = np.sqrt((1.0 + A1) ** 2 - 4.0 * nb2)
    s_minus_1 = 0.5 * (A1 + (A1 * (2.0 + A1) - 4.0 * nb2) / (root + 1.0))
    s = 1.0 + s_minus_1
    q = b / s
    dot_q = z.real * q.real + z.imag * q.imag
    dot_b = z.real * b.real + z.imag * b.imag
    az2 = np.abs(z) ** 2
    return (
        2.0 * np.log1p(s_minus_1)
        + 2.0 * np.log1p(abs(q) ** 2 * az2 - 2.0 * dot_q)
        - 2.0 * np.log1p(nb2 * az2 - 2.0 * dot_b)
    )


def w_correction(p: BubbleParams, x, method: str = "poisson", n_nodes: int = TRACE_NODES):
    if method == "closed":
        return w_correction_closed(p, x)
    if method != "poisson":
        raise ValueError(f"unknown projection method {method!r}")
    return _w_correction(float(p.delta), complex(p.b), n_nodes)(x)


def project_W_exact(p: BubbleParams, x, method: str = "poisson", n_nodes: int = TRACE_NODES):
    """PW: the H^1_0 function with the Laplacian of W, evaluated pointwise.

    Written as -2 log(delta^2 + |x-b|^2) + 8 pi H(x, b) + g(x) with g the harmonic
    extension of 2 log(1 + delta^2/|x-b|^2) from the boundary circle.
    """
    z = as_complex(x)
    return (
        -2.0 * np.log(p.delta**2 + _dist2(p, z))
        + 8.0 * np.pi * green_regular(z, p.b)
        + w_correction(p, z, method=method, n_nodes=n_nodes)
    )


def project_W_expansion(p: BubbleParams, x):
    z = as_complex(x)
    return -2.0 * np.log(p.delta**2 + _dist2(p, z)) + 8.0 * np.pi * green_regular(z, p.b) + 2.0 * p.delta**2


def project_Z(j: int, p: BubbleParams, x, mode: str = "exact", n_nodes: int = TRACE_NODES):
    z = as_complex(x)
    Z = kernel_Z(j, p, z)
    if mode == "exact":
        return Z - _z_extension(j, float(p.delta), complex(p.b), n_nodes)(z)
    if mode == "first_order":
        if j == 0:
            return 2.0 * p.delta**2 / (p.delta**2 + _dist2(p, z))
        return Z
    if mode == "refined":
        if j == 1:
            return Z - p.delta * (z.real - p.b.real)
        if j == 2:
            return Z - p.delta * (z.imag - p.b.imag)
        raise ValueError("refined mode is defined for j = 1, 2")
    raise ValueError(f"unknown mode {mode!r}")


def residual_exponent(p: BubbleParams, c: PotentialCoeffs, x, method: str = "poisson"):
    """log((lambda/4) V(x^(1/2)) e^{PW}) - W, assembled from small terms only."""
    z = as_complex(x)
    b = p.b
    vb = float(eval_V_half(c, b))
    if c.remainder is None:
        log_v = np.log1p(v_half_minus_one(c, z)) - np.log1p(float(v_half_minus_one(c, b)))
    else:
        log_v = np.log(eval_V_half(c, z) / vb)
    # calibration mismatch is zero for parameters built by delta_of
    mismatch = np.log(p.lam / (32.0 * p.delta**2)) + np.log(vb) + 4.0 * np.log1p(-abs(b) ** 2)
    nb2 = abs(b) ** 2
    dot = z.real * b.real + z.imag * b.imag
    green_shift = 2.0 * np.log1p(np.abs(z) ** 2 * nb2 - 2.0 * dot) - 4.0 * np.log1p(-nb2)
    return mismatch + log_v + green_shift + w_correction(p, z, method=method)


def nonlinearity(p: BubbleParams, c: PotentialCoeffs, x, method: str = "poisson"):
    """(lambda/4) V(x^(1/2)) e^{PW} = e^W + R."""
    z = as_complex(x)
    return exp_W(p, z) * np.exp(residual_exponent(p, c, z, method=method))


def residual_R(p: BubbleParams, c: PotentialCoeffs, x, method: str = "poisson"):
    z = as_complex(x)
    return exp_W(p, z) * np.expm1(residual_exponent(p, c, z, method=method))
