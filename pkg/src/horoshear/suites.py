"""Exact-identity suites behind ``horoshear verify``.

Each suite draws random configurations from its own seeded stream, measures
the largest residual of one family of identities and compares it with a fixed
tolerance.  Suites return :class:`SuiteResult` and never raise on a failed
identity; broken inputs (such as a corrupted lattice) are reported as failures.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import mpmath
import numpy as np

from .arcs import (ell_constant, shadow_factorization_residual, shadow_tangent, shadow_u_speed)
from .lattice import FuchsianGroupModel, LatticeError, dirichlet_margin, reduce, word_ball
from .lie import (DD_DIGITS, AlgebraVector, U, adjoint, basis_matrix, exp_algebra,
                  renormalization_element, renormalized_tangent, sheared_tangent)


@dataclass
class SuiteResult:
    name: str
    passed: bool
    max_residual: float
    tolerance: float
    n_cases: int
    seconds: float = 0.0
    details: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"name": self.name, "passed": bool(self.passed),
                "max_residual": float(self.max_residual), "tolerance": self.tolerance,
                "n_cases": self.n_cases, "seconds": round(self.seconds, 3),
                "details": self.details}


def random_direction(rng: np.random.Generator, bound: float = 1.0) -> AlgebraVector:
    """Uniform coefficients in [-bound, bound], rescaled so the largest is +-bound."""
    w = rng.uniform(-1, 1, 3)
    w = w / np.abs(w).max() * bound
    return AlgebraVector(*map(float, w))


def suite_derivative(rng: np.random.Generator, n: int = 100, h: float = 1e-5) -> SuiteResult:
    """d/ds exp(sW) = exp(sW) W by central differences, relative to the entry scale."""
    worst = 0.0
    for _ in range(n):
        W = AlgebraVector(*rng.uniform(-2, 2, 3))
        s = rng.uniform(-2, 2)
        fd = (exp_algebra(W, s + h) - exp_algebra(W, s - h)) / (2 * h)
        exact = exp_algebra(W, s) @ basis_matrix(W)
        worst = max(worst, float(np.abs(fd - exact).max() / max(1.0, np.abs(exact).max())))
    return SuiteResult("derivative", worst <= 1e-6, worst, 1e-6, n)


def suite_sheared_tangent(rng: np.random.Generator, n: int = 100) -> SuiteResult:
    """(v, x - 2tv, u + xt - vt**2) against conjugation by exp(tU)."""
    worst = 0.0
    for _ in range(n):
        W = random_direction(rng, 2.0)
        t = float(10 ** rng.uniform(-1, 3))
        direct = adjoint(exp_algebra(U, t), W)
        closed = sheared_tangent(W, t)
        scale = max(1.0, closed.max_abs())
        worst = max(worst, max(abs(a - b) for a, b in zip(direct, closed)) / scale)
    return SuiteResult("sheared_tangent", worst <= 1e-10, worst, 1e-10, n)


def suite_renormalized_tangent(rng: np.random.Generator, n: int = 100) -> SuiteResult:
    """Renormalized tangent against composed adjoints, and the bound 3 on [1, 1e6].

    The composed conjugation cancels terms of size t**2, so it is evaluated
    in extended precision; the closed form itself is evaluated in double.
    """
    worst, worst_bound = 0.0, 0.0
    ts = [1.0, 10.0, 1e2, 1e3, 1e4, 1e5, 1e6]
    for k in range(n):
        W = random_direction(rng)
        t = ts[k % len(ts)] if k < len(ts) else float(10 ** rng.uniform(0, 6))
        closed = renormalized_tangent(W, t)
        with mpmath.workdps(DD_DIGITS):
            direct = adjoint(renormalization_element(t, "dd"), W, "dd")
            res = max(float(abs(mpmath.mpf(a) - b)) for a, b in zip(closed, direct))
        worst = max(worst, res / max(1.0, closed.max_abs()))
        worst_bound = max(worst_bound, closed.max_abs())
    ok = worst <= 1e-10 and worst_bound <= 3.0
    return SuiteResult("renormalized_tangent_bound", ok, worst, 1e-10, n, details={"max_component": worst_bound})


def _admissible(rng: np.random.Generator, t_range=(2.0, 1e3)):
    W = random_direction(rng)
    t = float(10 ** rng.uniform(math.log10(t_range[0]), math.log10(t_range[1])))
    ell = ell_constant(W, 1.0, n_grid=200)
    s = float(rng.uniform(0, 1 / (ell * t)))
    return W, t, s, ell


def suite_shadow_factorization(rng: np.random.Generator, n: int = 100) -> SuiteResult:
    """exp(sW) exp(tU) exp(J0 V) = exp(J2 U) exp(J1 X) in the admissible window."""
    worst = 0.0
    for _ in range(n):
        W, t, s, _ = _admissible(rng)
        worst = max(worst, shadow_factorization_residual(W, t, s))
    return SuiteResult("shadow_factorization", worst <= 1e-10, worst, 1e-10, n)


def stated_shadow_u_speed(W: AlgebraVector, t: float) -> float:
    """-vt**2 + (x/2)t + u, the U-hat component as printed in the source text."""
    return -W.v * t * t + W.x * t / 2 + W.u


def suite_shadow_tangent(rng: np.random.Generator, n: int = 100) -> SuiteResult:
    """U-hat component of shadow tangents is u + xt - vt**2; |X-hat| <= 20 t.

    The residual against the stated form -vt**2 + (x/2)t + u is reported in
    ``details`` for reference; it differs by xt/2 whenever x != 0.
    """
    worst, worst_x, worst_stated = 0.0, 0.0, 0.0
    for _ in range(n):
        W, t, s, _ = _admissible(rng)
        tan = shadow_tangent(W, t, s)
        target = shadow_u_speed(W, t)
        scale = max(1.0, abs(target))
        worst = max(worst, abs(tan.u - target) / scale)
        worst_stated = max(worst_stated, abs(tan.u - stated_shadow_u_speed(W, t)) / scale)
        worst_x = max(worst_x, abs(tan.x) / (20 * t))
    ok = worst <= 1e-8 and worst_x <= 1.0
    return SuiteResult("shadow_tangent", ok, worst, 1e-8, n,
                       details={"max_xhat_over_20t": float(worst_x),
                                "stated_form_max_rel_residual": float(worst_stated)})


def suite_lattice(group: FuchsianGroupModel, rng: np.random.Generator, n: int = 100) -> SuiteResult:
    """Generator checks, then Dirichlet condition, idempotence and left invariance."""
    t0 = time.perf_counter()
    try:
        shortest = group.validate()
    except LatticeError as exc:
        return SuiteResult("lattice", False, math.inf, 1e-9, 0,
                           time.perf_counter() - t0, {"error": str(exc)})
    ball = word_ball(group, 2)[1:]
    worst, worst_margin = 0.0, math.inf
    for _ in range(n):
        g = exp_algebra(random_direction(rng, 3.0), 1.0) @ exp_algebra(U, rng.uniform(-5, 5))
        p = reduce(g, group)
        again = reduce(p.rep, group)
        worst = max(worst, abs(again.center_image() - p.center_image()))
        for gen in group.generators:
            q = reduce(gen @ g, group)
            worst = max(worst, _coset_gap(p.rep, q.rep, group))
        worst_margin = min(worst_margin, dirichlet_margin(p.rep, group, ball))
    ok = worst <= 1e-9 and worst_margin >= -1e-12
    return SuiteResult("lattice", ok, worst, 1e-9, n, time.perf_counter() - t0,
                       {"shortest_displacement": float(shortest),
                        "min_dirichlet_margin": float(worst_margin)})


def _coset_gap(a: np.ndarray, b: np.ndarray, group: FuchsianGroupModel) -> float:
    """Center-image distance, allowing for the two representatives of a wall point."""
    return min([_image_gap(a, b)] + [_image_gap(h @ a, b) for h in group.generators])


def _image_gap(a: np.ndarray, b: np.ndarray) -> float:
    za = (a[0, 0] * 1j + a[0, 1]) / (a[1, 0] * 1j + a[1, 1])
    zb = (b[0, 0] * 1j + b[0, 1]) / (b[1, 0] * 1j + b[1, 1])
    return abs(za - zb)


IDENTITY_SUITES = {
    "derivative": suite_derivative,
    "sheared_tangent": suite_sheared_tangent,
    "renormalized_tangent_bound": suite_renormalized_tangent,
    "shadow_factorization": suite_shadow_factorization,
    "shadow_tangent": suite_shadow_tangent,
}


def run_all(group: FuchsianGroupModel, seed: int, n: int = 100) -> list[SuiteResult]:
    results = []
    for k, (name, fn) in enumerate(IDENTITY_SUITES.items()):
        t0 = time.perf_counter()
        r = fn(np.random.default_rng([seed, k]), n)
        r.seconds = time.perf_counter() - t0
        results.append(r)
    results.append(suite_lattice(group, np.random.default_rng([seed, 99]), n))
    return results
