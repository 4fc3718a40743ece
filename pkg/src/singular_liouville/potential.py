"""Admissible potentials V and the polynomial form of V(y^(1/2))."""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from fractions import Fraction
from typing import Callable, Optional

import numpy as np

from .disk import as_complex, unfold_roots

COEFF_NAMES = ("A0", "A1", "A2", "D0", "D1", "D2", "D3")


@dataclass(frozen=True)
class PotentialCoeffs:
    """Quartic and sextic Taylor coefficients of an even potential with V(0) = 1.

    ``remainder(x1, x2)`` adds an optional O(|x|^7) tail; it must be even.
    """

    A0: float = 0.0
    A1: float = 0.0
    A2: float = 0.0
    D0: float = 0.0
    D1: float = 0.0
    D2: float = 0.0
    D3: float = 0.0
    remainder: Optional[Callable] = field(default=None, compare=False, repr=False)

    @property
    def A3(self):
        return -self.A1

    @property
    def A4(self):
        return self.A0

    @property
    def quartic(self):
        """Coefficients of x1^(4-j) x2^j, j = 0..4."""
        return (self.A0, self.A1, self.A2, self.A3, self.A4)

    @property
    def sextic(self):
        """Coefficients of x1^(6-j) x2^j, j = 0..6.

        D2 multiplies -(x1^4 x2^2 - x1^2 x2^4): with this sign the pulled-back
        cubic is (3 D0 - D2)/4 y1 y2^2, the form the reduced field is built on,
        and the worked example (D2 = -4) is the potential +4(x1^4 x2^2 - x1^2 x2^4).
        """
        return (self.D0, self.D1, -self.D2, self.D3, self.D2, self.D1, -self.D0)

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in COEFF_NAMES}

    @classmethod
    def from_dict(cls, d: dict) -> "PotentialCoeffs":
        unknown = set(d) - set(COEFF_NAMES)
        if unknown:
            raise KeyError(f"unknown potential coefficients: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in d.items()})

    def satisfies_techni(self, tol: float = 0.0) -> bool:
        return abs(self.A0 - 2) <= tol and abs(self.A1) <= tol and abs(self.A2 - 4) <= tol


EXAMPLE = PotentialCoeffs(A0=2.0, A1=0.0, A2=4.0, D0=0.0, D1=2.0, D2=-4.0, D3=-4.0)
CONSTANT = PotentialCoeffs()


def _xy(x):
    z = as_complex(x)
    return z.real, z.imag


def eval_V(c: PotentialCoeffs, x):
    x1, x2 = _xy(x)
    quartic = sum(a * x1 ** (4 - j) * x2**j for j, a in enumerate(c.quartic))
    sextic = sum(d * x1 ** (6 - j) * x2**j for j, d in enumerate(c.sextic))
    out = 1.0 + quartic + sextic
    if c.remainder is not None:
        out = out + c.remainder(x1, x2)
    return out


def half_coefficients(c: PotentialCoeffs) -> dict:
    """Coefficients of the quadratic and cubic forms of V(y^(1/2)) - 1.

    Keys are exponent pairs (i, j) of y1^i y2^j.  Works in exact arithmetic when
    the coefficients are Fractions or ints.
    """
    half = Fraction(1, 2) if isinstance(c.A0, (Fraction, int)) else 0.5
    A0, A1, A2, D0, D1, D2, D3 = (getattr(c, n) for n in COEFF_NAMES)
    return {
        (2, 0): A0,
        (1, 1): A1 * half,
        (0, 2): A0 * half + A2 * half * half,
        (3, 0): D0,
        (2, 1): D1 * half,
        (1, 2): (3 * D0 - D2) * half * half,
        (0, 3): D1 * half * half + D3 * half * half * half,
    }


def v_half_minus_one(c: PotentialCoeffs, y):
    """Polynomial part of V(y^(1/2)) - 1 (no remainder), free of cancellation."""
    y1, y2 = _xy(y)
    return sum(float(coef) * y1**i * y2**j for (i, j), coef in half_coefficients(c).items())


def eval_V_half(c: PotentialCoeffs, y, mode: str = "polynomial"):
    """V(y^(1/2)).

    mode="polynomial" uses the closed quadratic+cubic form (plus the pulled back
    remainder); mode="roots" evaluates V at the principal complex square root.
    """
    if mode == "roots":
        root = unfold_roots(as_complex(y), 2)[0]
        return eval_V(c, root)
    if mode != "polynomial":
        raise ValueError(f"unknown mode {mode!r}")
    out = 1.0 + v_half_minus_one(c, y)
    if c.remainder is not None:
        r = unfold_roots(as_complex(y), 2)[0]
        out = out + c.remainder(r.real, r.imag)
    return out


@dataclass(frozen=True)
class HalfTaylor:
    """Expansion of V(x^(1/2))/V(b^(1/2)) in powers of (x - b).

    ``linear`` holds the coefficients of (x1-b1), (x2-b2) coming from the quartic
    block; ``cubic`` the four cubic-block coefficients; ``P`` the homogeneous
    quadratic P(t) = P20 t1^2 + P11 t1 t2 + P02 t2^2.
    """

    b: tuple
    linear: tuple
    cubic: dict
    P: tuple
    order_tag: str = "O(|b||x-b|^2)+O(|b|^3|x-b|)+O(|x-b|^{7/2})+O(|b|^{7/2})"

    def __call__(self, x):
        x1, x2 = _xy(x)
        b1, b2 = self.b
        t1, t2 = x1 - b1, x2 - b2
        k = self.cubic
        out = 1.0 + self.linear[0] * t1 + self.linear[1] * t2
        out = out + k["D0"] * (t1**3 + 3 * b1**2 * t1)
        out = out + k["D1/2"] * (t1**2 * t2 + b1**2 * t2 + 2 * b1 * b2 * t1)
        out = out + k["(3D0-D2)/4"] * (t1 * t2**2 + b2**2 * t1 + 2 * b1 * b2 * t2)
        out = out + k["D1/4+D3/8"] * (t2**3 + 3 * b2**2 * t2)
        out = out + self.P[0] * t1**2 + self.P[1] * t1 * t2 + self.P[2] * t2**2
        return out

    def order_bound(self, x):
        x1, x2 = _xy(x)
        b1, b2 = self.b
        d = np.hypot(x1 - b1, x2 - b2)
        nb = np.hypot(b1, b2)
        return nb * d**2 + nb**3 * d + d**3.5 + nb**3.5


def taylor_V_half_around(c: PotentialCoeffs, b) -> HalfTaylor:
    b1, b2 = (float(v) for v in _xy(b))
    A0, A1, A2 = c.A0, c.A1, c.A2
    linear = (2 * A0 * b1 + 0.5 * A1 * b2, 0.5 * A1 * b1 + (A0 + 0.5 * A2) * b2)
    cubic = {
        "D0": c.D0,
        "D1/2": c.D1 / 2,
        "(3D0-D2)/4": (3 * c.D0 - c.D2) / 4,
        "D1/4+D3/8": c.D1 / 4 + c.D3 / 8,
    }
    P = (A0, A1 / 2, A0 / 2 + A2 / 4)
    return HalfTaylor(b=(b1, b2), linear=linear, cubic=cubic, P=P)


@dataclass
class HypothesisReport:
    positivity: bool
    positivity_margin: float
    even: bool
    evenness_defect: float
    normalized: bool
    techni: bool

    @property
    def all_ok(self) -> bool:
        return self.positivity and self.even and self.normalized and self.techni

    def failures(self) -> list:
        names = {
            "positivity": "V is not bounded below by a positive constant on the disk",
            "even": "V is not even",
            "normalized": "V(0) != 1",
            "techni": "structural constraint A0=2, A1=0, A2=4 violated",
        }
        return [msg for key, msg in names.items() if not getattr(self, key)]

    def as_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out["all_ok"] = self.all_ok
        return out


def check_hypotheses(c: PotentialCoeffs, n_grid: int = 401, c_min: float = 1e-3) -> HypothesisReport:
    r = np.linspace(0.0, 1.0, n_grid)
    theta = np.linspace(0.0, 2 * np.pi, n_grid, endpoint=False)
    z = (r[:, None] * np.exp(1j * theta[None, :])).ravel()
    v = eval_V(c, z)
    margin = float(np.min(v))
    if c.remainder is None:
        defect = 0.0
    else:
        defect = float(np.max(np.abs(v - eval_V(c, -z))))
    v0 = float(eval_V(c, np.array(0j)))
    return HypothesisReport(
        positivity=bool(margin > c_min),
        positivity_margin=margin,
        even=bool(defect <= 1e-12 * max(1.0, float(np.max(np.abs(v))))),
        evenness_defect=defect,
        normalized=bool(abs(v0 - 1.0) <= 1e-12),
        techni=c.satisfies_techni(),
    )
