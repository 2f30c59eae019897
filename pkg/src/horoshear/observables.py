"""Smooth zero-average test functions on M as truncated Poincare series.

A bump phi(g) = A (1 - rho(g)**2 / r_b**2)_+ ** k centered at g0 is summed over
the finite set of lattice elements whose translates can meet the fundamental
domain, then centered by subtracting its Haar mean.

Two deviations rho are supported:

* general: rho**2 = ||g0^-1 g - I||_F**2, a function on SL(2, R);
* K-invariant: rho**2 = ||g0^-1 g||_F**2 - 2 = 4 sinh(d/2)**2 with
  d = dist(g.i, g0.i), a function of the surface point only.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate

from . import _kernels
from .lattice import (FuchsianGroupModel, QuotientPoint, ReductionError, center_distance,
                      haar_sample_many, rotation, translation_to)
from .lie import AlgebraVector, U, V, X, check_unimodular, exp_algebra, inverse

BALL_MARGIN = 1.1
FRAME = (V, X, U)
FRAME_NAMES = "VXU"


@dataclass(frozen=True, eq=False)
class BumpSpec:
    center: np.ndarray
    radius: float
    smoothness: int = 6
    amplitude: float = 1.0
    k_invariant: bool = False

    def __post_init__(self):
        g0 = np.array(self.center, dtype=float)
        check_unimodular(g0)
        object.__setattr__(self, "center", g0)
        if not self.radius > 0:
            raise ValueError("bump radius must be positive")
        if int(self.smoothness) != self.smoothness or self.smoothness < 6:
            raise ValueError("smoothness must be an integer >= 6")

    def support_radius(self) -> float:
        """Hyperbolic radius about g0.i outside of which the bump vanishes."""
        if self.k_invariant:
            return 2 * math.asinh(self.radius / 2)
        # ||h - I|| >= ||h|| - sqrt 2 and ||h||**2 = 2 cosh dist(h.i, i)
        return math.acosh((math.sqrt(2) + self.radius) ** 2 / 2)

    def to_json(self) -> dict:
        return {"center": self.center.tolist(), "radius": self.radius,
                "smoothness": self.smoothness, "amplitude": self.amplitude,
                "k_invariant": self.k_invariant}

    @classmethod
    def from_json(cls, data: dict) -> "BumpSpec":
        return cls(np.array(data["center"], dtype=float), float(data["radius"]),
                   int(data.get("smoothness", 6)), float(data.get("amplitude", 1.0)),
                   bool(data.get("k_invariant", False)))


def _rho2(h: np.ndarray, k_invariant: bool) -> float:
    if k_invariant:
        return (h[0, 0] - h[1, 1]) ** 2 + (h[0, 1] + h[1, 0]) ** 2
    return float(((h - np.eye(2)) ** 2).sum())


def bump_eval(spec: BumpSpec, g: np.ndarray) -> float:
    """A (1 - rho**2 / r_b**2)_+ ** k."""
    r2 = _rho2(inverse(spec.center) @ g, spec.k_invariant)
    w = 1.0 - r2 / spec.radius**2
    return spec.amplitude * w**spec.smoothness if w > 0 else 0.0


@dataclass(frozen=True, eq=False)
class Observable:
    """Centered truncated Poincare series of a bump on M.

    ``ball`` holds the lattice elements gamma with phi(gamma g) possibly non-zero
    for g in the fundamental domain; ``mean_hat`` is the subtracted Haar mean
    and ``mean_stderr`` its uncertainty (zero for quadrature centering).
    """

    bump: BumpSpec
    group: FuchsianGroupModel
    ball: np.ndarray
    mean_hat: float = 0.0
    mean_stderr: float = 0.0
    sup_hat: float = 0.0
    sobolev_hat: float = 0.0
    centering: str = "none"
    label: str = "f"

    @property
    def k_invariant(self) -> bool:
        return self.bump.k_invariant

    @property
    def is_zero(self) -> bool:
        return self.bump.amplitude == 0.0 and self.mean_hat == 0.0

    def kernel_args(self) -> tuple:
        """Arguments for the compiled evaluators (center moved to i)."""
        m = self.group._frame
        g0i = inverse(self.bump.center)
        Q = np.ascontiguousarray(np.array([g0i @ g @ m for g in self.ball]).reshape(-1, 2, 2))
        return (self.group._kernel_generators, self.group.max_iter, Q,
                self.bump.radius**2, float(self.bump.smoothness), self.k_invariant,
                float(self.bump.amplitude), float(self.mean_hat))

    def to_kernel_frame(self, mats: np.ndarray) -> np.ndarray:
        mi = inverse(self.group._frame)
        return np.ascontiguousarray(np.einsum("ij,...jk->...ik", mi, mats))

    def values(self, mats: np.ndarray) -> np.ndarray:
        """f at arbitrary group elements (each is reduced first)."""
        mats = np.asarray(mats, dtype=float).reshape(-1, 2, 2)
        vals, status = _kernels.observable_many(self.to_kernel_frame(mats), *self.kernel_args())
        if status < 0:
            raise ReductionError("reduction exceeded the iteration cap")
        return vals

    def __call__(self, g: np.ndarray) -> float:
        return float(self.values(g)[0])

    def with_amplitude(self, amplitude: float) -> "Observable":
        """Same observable scaled to a new amplitude (all derived fields scale linearly)."""
        c = amplitude / self.bump.amplitude if self.bump.amplitude != 0 else 0.0
        return replace(self, bump=replace(self.bump, amplitude=amplitude),
                       mean_hat=c * self.mean_hat, mean_stderr=abs(c) * self.mean_stderr,
                       sup_hat=abs(c) * self.sup_hat, sobolev_hat=abs(c) * self.sobolev_hat)

    def manifest(self) -> dict:
        return {"label": self.label, "bump": self.bump.to_json(), "ball_size": len(self.ball),
                "mean_hat": self.mean_hat, "mean_stderr": self.mean_stderr,
                "sup_hat": self.sup_hat, "sobolev_hat": self.sobolev_hat,
                "centering": self.centering}


def observable_eval(f: Observable, p: QuotientPoint) -> float:
    """sum over the ball of phi(gamma p.rep) minus the subtracted mean."""
    total = math.fsum(bump_eval(f.bump, g @ p.rep) for g in f.ball)
    return total - f.mean_hat


# ---------------------------------------------------------------------------
# lattice ball

def lattice_ball(group: FuchsianGroupModel, center: np.ndarray, support: float,
                 margin: float = BALL_MARGIN) -> np.ndarray:
    """Elements gamma with dist(gamma^-1 g0.i, c) <= margin (R_F + support).

    Enumerated by walking tiles of the tessellation: the neighbors of the tile
    eta F are eta s F for generators s, and a tile can only meet the target
    disk if its center lies within the disk radius plus R_F.
    """
    m = group._frame
    mi = inverse(m)
    rf = group.domain_radius
    target = margin * (rf + support)
    walk = target + 2 * rf
    z0 = center
    found = []
    seen = {_key(np.eye(2))}
    frontier = [np.eye(2)]
    while frontier:
        nxt = []
        for eta in frontier:
            if center_distance(mi @ eta @ z0) <= target:
                found.append(inverse(eta))
            for s in group.generators:
                e = eta @ s
                k = _key(e)
                if k in seen:
                    continue
                seen.add(k)
                if center_distance(mi @ e @ m) <= walk:
                    nxt.append(e)
        frontier = nxt
    return np.array(found).reshape(-1, 2, 2)


def _key(g: np.ndarray) -> tuple:
    return tuple(np.round(g.ravel(), 6))


def _completeness_gap(f: Observable, bigger: Observable, mats: np.ndarray) -> float:
    return float(np.abs(f.values(mats) - bigger.values(mats)).max())


# ---------------------------------------------------------------------------
# Haar mean

def haar_integral(spec: BumpSpec) -> float:
    """Integral of the bump over SL(2, R) for the measure dx dy dtheta / y**2."""
    k, rb2 = spec.smoothness, spec.radius**2
    if spec.k_invariant:
        # with u = cosh r - 1 the profile is (1 - 2u / r_b**2)**k
        return spec.amplitude * 4 * math.pi**2 * rb2 / (2 * (k + 1))

    # g0^-1 g = k(a) a(r) k(b): rho**2 = 4c (c - cos psi), c = cosh(r/2), psi = a + b
    def inner(r):
        c = math.cosh(r / 2)
        lim = c - rb2 / (4 * c)
        if lim >= 1:
            return 0.0
        psi_max = math.pi if lim <= -1 else math.acos(lim)
        val, _ = integrate.quad(lambda p: (1 - 4 * c * (c - math.cos(p)) / rb2) ** k,
                                0, psi_max, epsabs=1e-14, epsrel=1e-12)
        return 2 * val * math.sinh(r)

    val, _ = integrate.quad(inner, 0, spec.support_radius(), epsabs=1e-14, epsrel=1e-12,
                            limit=200)
    return spec.amplitude * 2 * math.pi * val


def haar_mean(spec: BumpSpec, group: FuchsianGroupModel) -> float:
    """Exact Haar mean of the Poincare series on M (unfolding the sum)."""
    return haar_integral(spec) / group.volume


def make_zero_average(f: Observable, n: int, rng: np.random.Generator) -> Observable:
    """Center ``f`` by the Monte Carlo mean of its uncentered series over n Haar samples."""
    if n < 10_000:
        raise ValueError("centering needs at least 1e4 samples")
    raw = replace(f, mean_hat=0.0)
    vals = raw.values(haar_sample_many(f.group, rng, n))
    mean = math.fsum(vals) / n
    se = float(vals.std(ddof=1) / math.sqrt(n))
    return replace(f, mean_hat=mean, mean_stderr=se, centering="monte-carlo",
                   sup_hat=f.sup_hat - abs(f.mean_hat) + abs(mean))


def monte_carlo_mean(f: Observable, n: int, rng: np.random.Generator) -> tuple[float, float]:
    """Sample mean and standard error of f under Haar measure."""
    vals = f.values(haar_sample_many(f.group, rng, n))
    return math.fsum(vals) / n, float(vals.std(ddof=1) / math.sqrt(n))


# ---------------------------------------------------------------------------
# Sobolev proxy

def probe_points(spec: BumpSpec, n_radial: int = 6, n_angular: int = 8) -> np.ndarray:
    """Deterministic grid g0 k(a) a(r) k(b) covering the support of the bump.

    Every lattice translate of the bump is a left translate, so right-frame
    derivatives of f are those of the bump; sampling one copy suffices.
    """
    rs = spec.support_radius() * (np.arange(n_radial) + 0.5) / n_radial
    angles = 2 * math.pi * np.arange(n_angular) / n_angular
    betas = [0.0] if spec.k_invariant else angles[: max(1, n_angular // 2)]
    pts = []
    for r in rs:
        ar = np.diag([math.exp(r / 2), math.exp(-r / 2)])
        for a in angles:
            for b in betas:
                pts.append(spec.center @ rotation(a / 2) @ ar @ rotation(b))
    pts.append(spec.center.copy())
    return np.array(pts)


def proxy_step(order: int, base: float = 1e-3) -> float:
    """Difference step: 1e-3, enlarged for high orders where round-off dominates."""
    return max(base, np.finfo(float).eps ** (1.0 / (order + 2)))


def frame_derivatives(f: Observable, points: np.ndarray, order: int,
                      step: float | None = None) -> dict[str, np.ndarray]:
    """Mixed central differences D_{W1} ... D_{Wk} f along words in V, X, U.

    D_W f(g) = (f(g exp(hW)) - f(g exp(-hW))) / 2h applied from the left of
    the word, so the word "VX" differentiates along X first, then V.
    """
    h = proxy_step(order) if step is None else step
    out = {}
    steps = {(W, sgn): exp_algebra(W, sgn * h) for W in FRAME for sgn in (1, -1)}
    for word in itertools.product(range(3), repeat=order):
        total = np.zeros(len(points))
        for signs in itertools.product((1, -1), repeat=order):
            m = np.eye(2)
            for w, sgn in zip(word, signs):
                m = m @ steps[(FRAME[w], sgn)]
            total += np.prod(signs) * f.values(points @ m)
        out["".join(FRAME_NAMES[w] for w in word)] = total / (2 * h) ** order
    return out


def sobolev_proxy(f: Observable, order: int, points: np.ndarray | None = None) -> float:
    """max over probe points of the sum of |mixed frame derivatives| up to ``order``.

    A relative size indicator for the Sobolev norm, not the norm itself.
    """
    if not 0 <= order <= 6:
        raise ValueError("order must lie in 0..6")
    if f.bump.amplitude == 0:
        return abs(f.mean_hat)
    pts = probe_points(f.bump) if points is None else points
    total = np.abs(f.values(pts))
    for k in range(1, order + 1):
        for vals in frame_derivatives(f, pts, k).values():
            total += np.abs(vals)
    return float(total.max())


# ---------------------------------------------------------------------------
# construction

def build_observable(spec: BumpSpec, group: FuchsianGroupModel, centering: str = "quadrature",
                     rng: np.random.Generator | None = None, n_mc: int = 100_000,
                     sobolev_order: int = 1, label: str = "f",
                     check_points: int = 2000, seed: int = 0) -> Observable:
    """Assemble the Poincare series, verify truncation completeness, and center it.

    ``centering`` is "quadrature" (exact Haar integral of the bump), "monte-carlo"
    (mean over ``n_mc`` Haar samples drawn from ``rng``) or "none".
    Completeness is checked against a ball enlarged by half its radius on
    Haar-random points; on a mismatch the margin grows and the check repeats.
    """
    margin = BALL_MARGIN
    check_rng = np.random.default_rng(seed)
    mats = haar_sample_many(group, check_rng, check_points)
    near = probe_points(spec, 4, 6)
    mats = np.concatenate([mats, near])
    for _ in range(5):
        ball = lattice_ball(group, spec.center, spec.support_radius(), margin)
        f = Observable(spec, group, ball, label=label)
        bigger = Observable(spec, group,
                            lattice_ball(group, spec.center, spec.support_radius(), 1.5 * margin))
        if _completeness_gap(f, bigger, mats) <= 1e-12 * max(1.0, abs(spec.amplitude)):
            break
        margin *= 1.5
    else:
        raise RuntimeError("lattice ball failed the completeness check after enlargement")

    if centering == "quadrature":
        f = replace(f, mean_hat=haar_mean(spec, group), centering="quadrature")
    elif centering == "monte-carlo":
        if rng is None:
            raise ValueError("Monte Carlo centering needs an rng")
        f = make_zero_average(f, n_mc, rng)
    elif centering != "none":
        raise ValueError(f"unknown centering {centering!r}")
    sup = float(np.abs(f.values(probe_points(spec))).max())
    f = replace(f, sup_hat=max(sup, abs(f.mean_hat)))
    return replace(f, sobolev_hat=sobolev_proxy(f, sobolev_order))


def k_invariant_observable(group: FuchsianGroupModel, center: complex = 1j,
                           radius: float = 1.0, smoothness: int = 6, amplitude: float = 1.0,
                           **kwargs) -> Observable:
    """K-invariant bump around the surface point ``center``, centered by quadrature."""
    spec = BumpSpec(translation_to(center), radius, smoothness, amplitude, k_invariant=True)
    return build_observable(spec, group, **kwargs)


def default_center(group: FuchsianGroupModel) -> np.ndarray:
    """Bump center k(0.3) a(0.8): a generic interior point of the Bolza octagon."""
    c = translation_to(group.center)
    return c @ rotation(0.3) @ np.diag([math.exp(0.4), math.exp(-0.4)])
