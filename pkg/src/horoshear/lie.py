"""Closed-form Lie theory of sl(2, R) in the basis {V, X, U}.

V = [[0, 0], [1, 0]] generates the unstable horocycle flow, X = diag(1/2, -1/2)
the geodesic flow and U = [[0, 1], [0, 0]] the stable horocycle flow.  An
element vV + xX + uU is stored as an :class:`AlgebraVector`; group elements are
plain 2x2 numpy arrays with unit determinant.

Every routine accepts ``precision="dd"`` to run in extended precision through
mpmath (32 significant digits); results are then numpy object arrays of
``mpmath.mpf``.  The extended mode exists for validating the double-precision
formulas where intermediate quantities grow like t**2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import mpmath
import numpy as np

DD_DIGITS = 32
DET_TOL = 1e-9

PRECISIONS = ("double", "dd")


class AlgebraVector(NamedTuple):
    """Coordinates (v, x, u) of vV + xX + uU."""

    v: float
    x: float
    u: float

    def scaled(self, c) -> "AlgebraVector":
        return AlgebraVector(c * self.v, c * self.x, c * self.u)

    def plus(self, other: "AlgebraVector") -> "AlgebraVector":
        return AlgebraVector(self.v + other.v, self.x + other.x, self.u + other.u)

    def max_abs(self):
        return max(abs(self.v), abs(self.x), abs(self.u))

    def norm(self):
        return math.sqrt(float(self.v) ** 2 + float(self.x) ** 2 + float(self.u) ** 2)

    def is_zero(self) -> bool:
        return self.v == 0 and self.x == 0 and self.u == 0


V = AlgebraVector(1.0, 0.0, 0.0)
X = AlgebraVector(0.0, 1.0, 0.0)
U = AlgebraVector(0.0, 0.0, 1.0)


@dataclass(frozen=True)
class SpectralProfile:
    """Bottom of the non-zero Laplace spectrum and the derived exponents."""

    mu0: float
    nu0: float
    eps0: int
    delta0: int


def spectral_profile(mu0: float) -> SpectralProfile:
    """Exponent bookkeeping for a spectral gap ``mu0``.

    ``nu0 = sqrt(1 - 4 mu0)`` below 1/4 and 0 otherwise; ``eps0`` flags
    ``mu0 == 1/4`` and ``delta0`` flags ``mu0 >= 1/4``.
    """
    if not mu0 > 0:
        raise ValueError(f"mu0 must be positive, got {mu0!r}")
    nu0 = math.sqrt(1.0 - 4.0 * mu0) if mu0 < 0.25 else 0.0
    eps0 = 1 if mu0 == 0.25 else 0
    delta0 = 1 if mu0 >= 0.25 else 0
    return SpectralProfile(mu0=mu0, nu0=nu0, eps0=eps0, delta0=delta0)


# ---------------------------------------------------------------------------
# precision plumbing

def _check_precision(precision: str) -> None:
    if precision not in PRECISIONS:
        raise ValueError(f"unknown precision {precision!r}; expected one of {PRECISIONS}")


def to_precision(value, precision: str = "double"):
    """Convert a scalar or array to the working type of ``precision``."""
    _check_precision(precision)
    if precision == "double":
        if isinstance(value, np.ndarray) and value.dtype == object:
            return np.array([[float(e) for e in row] for row in value])
        return np.asarray(value, dtype=float) if isinstance(value, np.ndarray) else float(value)
    with mpmath.workdps(DD_DIGITS):
        if isinstance(value, np.ndarray):
            return np.array([[mpmath.mpf(e) for e in row] for row in value], dtype=object)
        return mpmath.mpf(value)


def _vector(W: AlgebraVector, precision: str) -> AlgebraVector:
    if precision == "double":
        return AlgebraVector(float(W.v), float(W.x), float(W.u))
    return AlgebraVector(*(mpmath.mpf(c) for c in W))


def identity(precision: str = "double") -> np.ndarray:
    return to_precision(np.eye(2), precision)


# ---------------------------------------------------------------------------
# basis, exponential, adjoint

def basis_matrix(W: AlgebraVector, precision: str = "double") -> np.ndarray:
    """Trace-zero matrix [[x/2, u], [v, -x/2]] representing W."""
    _check_precision(precision)
    if precision == "dd":
        with mpmath.workdps(DD_DIGITS):
            v, x, u = _vector(W, precision)
            return np.array([[x / 2, u], [v, -x / 2]], dtype=object)
    v, x, u = _vector(W, precision)
    return np.array([[x / 2, u], [v, -x / 2]])


def coordinates(M: np.ndarray, tol: float | None = None) -> AlgebraVector:
    """Decompose a trace-zero matrix in the basis {V, X, U}.

    With ``tol`` given, raise ``ValueError`` when the trace residual exceeds it.
    """
    if tol is not None:
        scale = max(1.0, float(abs(M[0, 0])) + float(abs(M[1, 1])))
        if float(abs(M[0, 0] + M[1, 1])) > tol * scale:
            raise ValueError("matrix is not trace-zero within tolerance")
    return AlgebraVector(M[1, 0], M[0, 0] - M[1, 1], M[0, 1])


def _exp_coefficients(delta, s, precision):
    # exp(sM) = C I + S M because M @ M = delta I
    z = delta * s * s
    if precision == "dd":
        if abs(z) < mpmath.mpf("1e-8"):
            C = 1 + z / 2 + z**2 / 24 + z**3 / 720 + z**4 / 40320
            S = s * (1 + z / 6 + z**2 / 120 + z**3 / 5040 + z**4 / 362880)
        elif delta > 0:
            r = mpmath.sqrt(delta)
            C, S = mpmath.cosh(r * s), mpmath.sinh(r * s) / r
        else:
            r = mpmath.sqrt(-delta)
            C, S = mpmath.cos(r * s), mpmath.sin(r * s) / r
        return C, S
    if abs(z) < 1e-4:
        C = 1.0 + z / 2 + z * z / 24 + z**3 / 720
        S = s * (1.0 + z / 6 + z * z / 120 + z**3 / 5040)
    elif delta > 0:
        r = math.sqrt(delta)
        C, S = math.cosh(r * s), math.sinh(r * s) / r
    else:
        r = math.sqrt(-delta)
        C, S = math.cos(r * s), math.sin(r * s) / r
    return C, S


def exp_algebra(W: AlgebraVector, s=1.0, precision: str = "double") -> np.ndarray:
    """exp(s W) in closed form.

    With delta = x**2/4 + u*v, the hyperbolic branch (delta > 0), the
    elliptic branch (delta < 0) and a series for small |delta s**2| cover every
    generator, the nilpotent ones included.
    """
    _check_precision(precision)
    if precision == "dd":
        with mpmath.workdps(DD_DIGITS):
            v, x, u = _vector(W, precision)
            s = mpmath.mpf(s)
            C, S = _exp_coefficients(x * x / 4 + u * v, s, precision)
            return np.array([[C + S * x / 2, S * u], [S * v, C - S * x / 2]], dtype=object)
    v, x, u = _vector(W, precision)
    C, S = _exp_coefficients(x * x / 4 + u * v, float(s), precision)
    return np.array([[C + S * x / 2, S * u], [S * v, C - S * x / 2]])


def exp_algebra_many(W: AlgebraVector, s: np.ndarray) -> np.ndarray:
    """exp(s_j W) for an array of parameters, shape (n, 2, 2), double precision."""
    v, x, u = (float(c) for c in W)
    s = np.asarray(s, dtype=float)
    delta = x * x / 4 + u * v
    z = delta * s * s
    small = np.abs(z) < 1e-4
    C = 1.0 + z / 2 + z * z / 24 + z**3 / 720
    S = s * (1.0 + z / 6 + z * z / 120 + z**3 / 5040)
    if delta > 0:
        r = math.sqrt(delta)
        C = np.where(small, C, np.cosh(r * s))
        S = np.where(small, S, np.sinh(r * s) / r)
    elif delta < 0:
        r = math.sqrt(-delta)
        C = np.where(small, C, np.cos(r * s))
        S = np.where(small, S, np.sin(r * s) / r)
    out = np.empty(s.shape + (2, 2))
    out[..., 0, 0] = C + S * x / 2
    out[..., 0, 1] = S * u
    out[..., 1, 0] = S * v
    out[..., 1, 1] = C - S * x / 2
    return out


def det(g: np.ndarray):
    return g[0, 0] * g[1, 1] - g[0, 1] * g[1, 0]


def inverse(g: np.ndarray) -> np.ndarray:
    """Inverse of a unit-determinant matrix (its adjugate)."""
    out = np.empty_like(g)
    out[0, 0], out[0, 1], out[1, 0], out[1, 1] = g[1, 1], -g[0, 1], -g[1, 0], g[0, 0]
    return out


def check_unimodular(g: np.ndarray, tol: float = DET_TOL) -> None:
    if not float(abs(det(g) - 1)) <= tol:
        raise ValueError(f"determinant {float(det(g))!r} deviates from 1 by more than {tol}")


def adjoint(g: np.ndarray, W: AlgebraVector, precision: str = "double") -> AlgebraVector:
    """Ad_g(W) = g^{-1} W g, the tangent of s -> q exp(sW) g at s = 0.

    Raises ``ValueError`` when g is not unimodular to 1e-9, since then the
    adjugate is not an inverse and the coordinates would be silently wrong.
    """
    _check_precision(precision)
    check_unimodular(g)
    if precision == "dd":
        with mpmath.workdps(DD_DIGITS):
            g = to_precision(g, "dd")
            N = inverse(g).dot(basis_matrix(W, "dd")).dot(g)
            return coordinates(N, tol=1e-9)
    g = np.asarray(g, dtype=float)
    N = inverse(g) @ basis_matrix(W) @ g
    return coordinates(N, tol=1e-9)


def sheared_tangent(W: AlgebraVector, t):
    """Ad_{exp(tU)}(W) = vV + (x - 2tv)X + (u + xt - vt**2)U."""
    v, x, u = W
    return AlgebraVector(v, x - 2 * t * v, u + x * t - v * t * t)


def renormalization_element(t, precision: str = "double") -> np.ndarray:
    """exp(tU) exp(2 log(t) X) exp(-tV): shear by t, then renormalize."""
    if precision == "dd":
        with mpmath.workdps(DD_DIGITS):
            t = mpmath.mpf(t)
            return (exp_algebra(U, t, "dd").dot(exp_algebra(X, 2 * mpmath.log(t), "dd"))
                    .dot(exp_algebra(V, -t, "dd")))
    return exp_algebra(U, t) @ exp_algebra(X, 2 * math.log(t)) @ exp_algebra(V, -t)


def renormalized_tangent(W: AlgebraVector, t):
    """Tangent of the sheared arc after g_{2 log t} then h^u_{-t}.

    Equals -uV - (x + 2u/t)X + (u/t**2 + x/t - v)U; every coefficient stays
    bounded by 3 for t >= 1 when max(|v|, |x|, |u|) <= 1.
    """
    if t < 1:
        raise ValueError("renormalized tangent requires t >= 1")
    v, x, u = W
    return AlgebraVector(-u, -(x + 2 * u / t), u / (t * t) + x / t - v)


def matrix_log(g: np.ndarray) -> AlgebraVector:
    """Coordinates of the principal logarithm of a unimodular g near I.

    Valid for tr(g) > -2; uses log g = q / sinh(q) (g - cosh(q) I) and its
    elliptic and parabolic variants.
    """
    half_trace = 0.5 * float(g[0, 0] + g[1, 1])
    traceless = np.array(g, dtype=float) - half_trace * np.eye(2)
    if half_trace > 1.0 + 1e-12:
        q = math.acosh(half_trace)
        factor = q / math.sinh(q)
    elif half_trace < 1.0 - 1e-12:
        if half_trace <= -1.0:
            raise ValueError("matrix logarithm undefined for trace <= -2")
        q = math.acos(half_trace)
        factor = q / math.sin(q)
    else:
        factor = 1.0
    return coordinates(factor * traceless)
