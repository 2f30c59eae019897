"""Sheared arcs, renormalization, shadow curves and line integrals against U-hat.

An arc s -> p exp(sW), s in [0, S], pushed by the horocycle flow for time t
becomes s -> p exp(sW) exp(tU), whose tangent is Ad_{exp(tU)} W: for large t it
is dominated by its U-component u + xt - vt**2.  A short piece of it is
shadowed by a curve in the {X, U}-leaf of its starting point, obtained by
correcting along V by J0(s); the correction is O(1/t).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import mpmath
import numpy as np

from . import _kernels
from .lattice import QuotientPoint, ReductionError, reduce_many
from .lie import (DD_DIGITS, AlgebraVector, U, V, X, adjoint, basis_matrix, exp_algebra,
                  exp_algebra_many, inverse,
                  matrix_log, renormalized_tangent, sheared_tangent)

KAPPA = 20.0
SHADOW_MIN_DENOMINATOR = 0.5


@dataclass(frozen=True, eq=False)
class ArcSpec:
    base: QuotientPoint
    direction: AlgebraVector
    length: float
    sigma: float
    horocycle_time: float = 0.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not 0 <= self.length <= self.sigma:
            raise ValueError("arc length must satisfy 0 <= S <= sigma")
        if self.horocycle_time < 0:
            raise ValueError("horocycle time must be non-negative")


@dataclass(frozen=True)
class ShadowFrame:
    J0: float
    J1: float
    J2: float
    denominator: float


@dataclass(frozen=True, eq=False)
class Curve:
    """Sampled arc: parameters, reduced points and tangents in the basis V, X, U."""

    s: np.ndarray
    points: np.ndarray
    tangents: np.ndarray
    kind: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float)
        if len(s) < 2:
            raise ValueError("a curve needs at least two nodes")
        if not np.all(np.diff(s) > 0):
            raise ValueError("curve parameters must be strictly increasing")
        tan = np.asarray(self.tangents, dtype=float)
        if tan.shape != (len(s), 3) or not np.isfinite(tan).all():
            raise ValueError("tangents must be a finite (n, 3) array")
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "tangents", tan)

    def __len__(self) -> int:
        return len(self.s)

    def split(self, j: int) -> tuple["Curve", "Curve"]:
        """Two subcurves sharing node j."""
        if not 0 < j < len(self) - 1:
            raise ValueError("split index must be an interior node")
        first = Curve(self.s[: j + 1], self.points[: j + 1], self.tangents[: j + 1],
                      self.kind, self.meta)
        second = Curve(self.s[j:], self.points[j:], self.tangents[j:], self.kind, self.meta)
        return first, second

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["s", "a", "b", "c", "d", "tangent_v", "tangent_x", "tangent_u"])
            for s, g, tan in zip(self.s, self.points, self.tangents):
                w.writerow([repr(float(e)) for e in (s, *g.ravel(), *tan)])


# ---------------------------------------------------------------------------
# arc constants

def normalize_direction(W: AlgebraVector, S: float, sigma: float):
    """Rescale W to max coefficient 1, stretching S and sigma to keep the same curve."""
    if W.is_zero():
        raise ValueError("direction must be non-zero")
    c = W.max_abs()
    return W.scaled(1.0 / c), c * S, c * sigma, c


def ell_constant(W: AlgebraVector, sigma: float, n_grid: int = 10_000,
                 inflation: float = 0.01) -> float:
    """4 max over [0, sigma] of the entries of d/ds exp(sW) = exp(sW) W, inflated by 1%."""
    B = basis_matrix(W)
    best = 0.0
    for s in np.linspace(0.0, sigma, n_grid):
        best = max(best, float(np.abs(exp_algebra(W, s) @ B).max()))
    return 4 * best * (1 + inflation)


def node_count(W: AlgebraVector, S: float, t: float, radius: float, kappa: float = KAPPA) -> int:
    """Even interval count ceil(kappa S max(1, |v|t**2 + |x|t + |u|) / r_b)."""
    speed = max(1.0, abs(W.v) * t * t + abs(W.x) * t + abs(W.u))
    n = max(2, math.ceil(kappa * S * speed / radius))
    return n + (n % 2)


# ---------------------------------------------------------------------------
# sheared and renormalized arcs

def _arc_curve(base: QuotientPoint, W: AlgebraVector, S: float, right: np.ndarray,
               n: int, group, tangent: AlgebraVector, kind: str, meta: dict) -> Curve:
    s = np.linspace(0.0, S, n)
    mats = base.rep @ exp_algebra_many(W, s) @ right
    pts = reduce_many(mats, group)
    tans = np.tile(np.array(tangent, dtype=float), (n, 1))
    return Curve(s, pts, tans, kind, meta)


def sheared_arc(spec: ArcSpec, n: int, group) -> Curve:
    """Nodes p exp(s_j W) exp(tU) at s_j = j S / (n - 1), reduced into the domain."""
    if n < 2:
        raise ValueError("need at least two nodes")
    t = spec.horocycle_time
    return _arc_curve(spec.base, spec.direction, spec.length, exp_algebra(U, t), n, group,
                      sheared_tangent(spec.direction, t), "sheared",
                      {"W": tuple(spec.direction), "t": t})


def renormalize_arc(curve: Curve, group) -> Curve:
    """Apply g_{2 log t} then h^u_{-t} to a sheared arc (t >= 1)."""
    if curve.kind != "sheared":
        raise ValueError("only sheared arcs can be renormalized")
    t = curve.meta["t"]
    if t < 1:
        raise ValueError("renormalization requires t >= 1")
    W = AlgebraVector(*curve.meta["W"])
    R = exp_algebra(X, 2 * math.log(t)) @ exp_algebra(V, -t)
    pts = reduce_many(np.einsum("nij,jk->nik", curve.points, R), group)
    tans = np.tile(np.array(renormalized_tangent(W, t), dtype=float), (len(curve), 1))
    return Curve(curve.s, pts, tans, "renormalized", dict(curve.meta))


def flow_curve(curve: Curve, W: AlgebraVector, tau: float, group) -> Curve:
    """The curve pushed by the flow phi^W_tau; tangents transform by Ad_{exp(tau W)}."""
    g = exp_algebra(W, tau)
    pts = reduce_many(np.einsum("nij,jk->nik", curve.points, g), group)
    tans = np.array([adjoint(g, AlgebraVector(*row)) for row in curve.tangents], dtype=float)
    return Curve(curve.s, pts, tans, curve.kind, dict(curve.meta))


def one_form_lengths(curve: Curve) -> dict[str, float]:
    """Integrals of |V-hat|, |X-hat|, |U-hat| along the curve (trapezoid rule)."""
    out = {}
    for k, name in enumerate("vxu"):
        out[name] = float(np.trapezoid(np.abs(curve.tangents[:, k]), curve.s))
    return out


def partition_arc(spec: ArcSpec, ell: float, group) -> list[QuotientPoint]:
    """p_k = p exp(k W / (ell t)) for k = 0 .. floor(S ell t) - 1."""
    t = spec.horocycle_time
    if t < 2:
        raise ValueError("partition requires t >= 2")
    count = math.floor(spec.length * ell * t)
    if count == 0:
        return []
    mats = spec.base.rep @ exp_algebra_many(spec.direction, np.arange(count) / (ell * t))
    return [QuotientPoint(m) for m in reduce_many(mats, group)]


# ---------------------------------------------------------------------------
# shadow curves

def _exp_entries(W: AlgebraVector, s):
    """Entries of exp(sW); accepts complex s for complex-step differentiation."""
    v, x, u = W
    delta = x * x / 4 + u * v
    z = delta * s * s
    if abs(z) < 1e-4:
        C = 1 + z / 2 + z * z / 24 + z**3 / 720
        S = s * (1 + z / 6 + z * z / 120 + z**3 / 5040)
    elif delta > 0:
        r = math.sqrt(delta)
        C, S = np.cosh(r * s), np.sinh(r * s) / r
    else:
        r = math.sqrt(-delta)
        C, S = np.cos(r * s), np.sin(r * s) / r
    return C + S * x / 2, S * u, S * v, C - S * x / 2


def _frame_values(W, t, s):
    a, b, c, d = _exp_entries(W, s)
    den = d + c * t
    return -c / den, -2 * np.log(den), (b + a * t) / den, den


def shadow_frame(W: AlgebraVector, t: float, s: float, ell: float | None = None) -> ShadowFrame:
    """J0 = -c/(d + ct), J1 = -2 log(d + ct), J2 = (b + at)/(d + ct) for exp(sW)."""
    if t < 2:
        raise ValueError("shadow frames require t >= 2")
    if ell is not None and not 0 <= s <= 1 / (ell * t) * (1 + 1e-12):
        raise ValueError("s lies outside the partition window [0, 1/(ell t)]")
    J0, J1, J2, den = _frame_values(W, t, float(s))
    if not den >= SHADOW_MIN_DENOMINATOR:
        raise ValueError(f"d + ct = {den:.6g} is below 1/2; s lies outside the admissible window")
    return ShadowFrame(float(J0), float(J1), float(J2), float(den))


def shadow_factorization_residual(W: AlgebraVector, t: float, s: float) -> float:
    """max entry of exp(sW) exp(tU) exp(J0 V) - exp(J2 U) exp(J1 X)."""
    fr = shadow_frame(W, t, s)
    lhs = exp_algebra(W, s) @ exp_algebra(U, t) @ exp_algebra(V, fr.J0)
    rhs = exp_algebra(U, fr.J2) @ exp_algebra(X, fr.J1)
    return float(np.abs(lhs - rhs).max())


def shadow_tangent(W: AlgebraVector, t: float, s: float, h: float = 1e-20) -> AlgebraVector:
    """Tangent of s -> exp(J2 U) exp(J1 X): (0, J1', J2' e^{-J1}).

    Derivatives are taken by complex-step differentiation, which has no
    subtractive cancellation and is accurate to round-off.
    """
    J0, J1, J2, _ = _frame_values(W, t, complex(s, h))
    d1, d2 = J1.imag / h, J2.imag / h
    return AlgebraVector(0.0, d1, d2 * math.exp(-J1.real))


def shadow_u_speed(W: AlgebraVector, t: float) -> float:
    """The constant U-hat component u + xt - vt**2 of shadow tangents."""
    return W.u + W.x * t - W.v * t * t


def shadow_curve(p_k: QuotientPoint, W: AlgebraVector, t: float, n: int,
                 ell: float | None = None) -> Curve:
    """Shadow of the sheared arc from p_k over s in [0, 1/(ell t)].

    Points are p_k exp(J2(s) U) exp(J1(s) X), kept in leaf coordinates relative
    to p_k and not re-reduced, since the window is short.
    """
    if ell is None:
        ell = ell_constant(W, 1.0)
    s = np.linspace(0.0, 1 / (ell * t), n)
    pts, tans = [], []
    for sj in s:
        fr = shadow_frame(W, t, sj, ell)
        pts.append(p_k.rep @ exp_algebra(U, fr.J2) @ exp_algebra(X, fr.J1))
        tans.append(shadow_tangent(W, t, sj))
    return Curve(s, np.array(pts), np.array(tans, dtype=float), "shadow",
                 {"W": tuple(W), "t": t, "ell": ell})


def shadow_distance(W: AlgebraVector, t: float, s: float, precision: str = "double") -> float:
    """||log(g_true^-1 g_shadow)|| in basis coordinates, for the left-invariant
    metric making V, X, U orthonormal; g_true^-1 g_shadow = exp(J0 V)."""
    fr = shadow_frame(W, t, s)
    if precision == "dd":
        with mpmath.workdps(DD_DIGITS):
            true = exp_algebra(W, s, "dd").dot(exp_algebra(U, t, "dd"))
            j2 = (true[0, 1]) / true[1, 1]
            j1 = -2 * mpmath.log(true[1, 1])
            shadow = exp_algebra(U, j2, "dd").dot(exp_algebra(X, j1, "dd"))
            rel = inverse(true).dot(shadow)
            return matrix_log(np.array([[float(e) for e in row] for row in rel])).norm()
    true = exp_algebra(W, s) @ exp_algebra(U, t)
    shadow = exp_algebra(U, fr.J2) @ exp_algebra(X, fr.J1)
    return matrix_log(inverse(true) @ shadow).norm()


def max_shadow_distance(W: AlgebraVector, t: float, ell: float | None = None,
                        n: int = 65, precision: str = "double") -> float:
    """Largest shadow distance over the window [0, 1/(ell t)]."""
    if ell is None:
        ell = ell_constant(W, 1.0)
    return max(shadow_distance(W, t, s, precision) for s in np.linspace(0.0, 1 / (ell * t), n))


# ---------------------------------------------------------------------------
# line integrals

def line_integral_U(f, curve: Curve) -> float:
    """Trapezoid rule for the integral of f U-hat along the curve, with exact summation.

    ``f`` is an :class:`~horoshear.observables.Observable` (or any callable on
    batches of matrices via ``values``).  Interval contributions are summed with
    math.fsum, so splits at nodes add up to the whole to within one rounding.
    """
    vals = f.values(curve.points) * curve.tangents[:, 2]
    h = np.diff(curve.s)
    return math.fsum(h * 0.5 * (vals[:-1] + vals[1:]))


def line_integral_U_fast(f, base: np.ndarray, W: AlgebraVector, S: float, t: float,
                         n_intervals: int) -> tuple[float, float]:
    """Line integral of f U-hat over the sheared arc using the compiled kernel.

    Returns the trapezoid value on n_intervals and on n_intervals / 2 intervals.
    """
    args = f.kernel_args()
    P = f.to_kernel_frame(np.asarray(base, dtype=float))
    fine, coarse, status = _kernels.arc_sums(P, W.v, W.x, W.u, exp_algebra(U, t), S,
                                             n_intervals, args[0], args[1], *args[2:])
    if status < 0:
        raise ReductionError("reduction exceeded the iteration cap")
    speed = sheared_tangent(W, t).u
    return speed * fine, speed * coarse
