"""Measurements: push-forward integrals, decay fits, mixing correlations.

Every computation that feeds a CSV is deterministic: base points are drawn
once from a seeded generator, the per-task work uses no randomness, and
results are gathered in task order regardless of the worker count.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _kernels
from .arcs import node_count
from .lattice import ReductionError, haar_sample_many, rotation
from .lie import AlgebraVector, U, V, exp_algebra, sheared_tangent, spectral_profile  # noqa: F401
from .observables import Observable

QUAD_TOL = 1e-3


class QuadratureError(RuntimeError):
    """The Richardson probe stayed above tolerance after refinement."""


@dataclass(frozen=True)
class PushforwardResult:
    value: float
    error: float
    n_intervals: int
    converged: bool


def _arc_integral(f: Observable, base: np.ndarray, W: AlgebraVector, S: float, R: np.ndarray,
                  n_intervals: int) -> tuple[float, float]:
    args = f.kernel_args()
    P = f.to_kernel_frame(np.asarray(base, dtype=float))
    fine, coarse, status = _kernels.arc_sums(P, float(W.v), float(W.x), float(W.u), R, float(S),
                                             int(n_intervals), *args)
    if status < 0:
        raise ReductionError("reduction exceeded the iteration cap")
    return fine, coarse


def pushforward_integral(f: Observable, base: np.ndarray, W: AlgebraVector, S: float, t: float,
                         kappa: float = 20.0, strict: bool = False) -> PushforwardResult:
    """Trapezoid value of the integral over [0, S] of f(p exp(sW) exp(tU)).

    The grid has twice the policy node count; the error estimate is the
    difference from the half grid.  If it exceeds 1e-3 sup|f| S, the grid is
    doubled once more before declaring non-convergence.
    """
    if not S > 0:
        raise ValueError("arc length must be positive")
    if f.is_zero:
        n = node_count(W, S, t, f.bump.radius, kappa)
        return PushforwardResult(0.0, 0.0, 2 * n, True)
    R = exp_algebra(U, t)
    n = 2 * node_count(W, S, t, f.bump.radius, kappa)
    tol = QUAD_TOL * max(f.sup_hat, abs(f.bump.amplitude)) * S
    fine, coarse = _arc_integral(f, base, W, S, R, n)
    err = abs(fine - coarse)
    if err > tol:
        n *= 2
        fine, coarse = _arc_integral(f, base, W, S, R, n)
        err = abs(fine - coarse)
    ok = err <= tol
    if strict and not ok:
        raise QuadratureError(f"Richardson probe {err:.3g} exceeds {tol:.3g} at t={t}")
    return PushforwardResult(fine, err, n, ok)


# ---------------------------------------------------------------------------
# decay series

@dataclass
class DecaySeries:
    t: np.ndarray
    value: np.ndarray
    stderr: np.ndarray
    quad_error: np.ndarray
    n_nodes: np.ndarray
    per_point: np.ndarray
    per_point_error: np.ndarray
    converged: bool = True
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if np.any(np.diff(self.t) <= 0):
            raise ValueError("t must be strictly increasing")
        if np.any(self.value < 0):
            raise ValueError("decay values must be non-negative")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "point", "value", "stderr", "n_nodes", "quad_error"])
            for i, t in enumerate(self.t):
                for j in range(self.per_point.shape[1]):
                    w.writerow([repr(float(t)), j, repr(float(self.per_point[i, j])), "",
                                int(self.n_nodes[i]), repr(float(self.per_point_error[i, j]))])
                w.writerow([repr(float(t)), "aggregate", repr(float(self.value[i])),
                            repr(float(self.stderr[i])), int(self.n_nodes[i]),
                            repr(float(self.quad_error[i]))])


def rms_with_stderr(samples: np.ndarray) -> tuple[float, float]:
    """Root mean square of the samples and its delta-method standard error."""
    sq = np.asarray(samples, dtype=float) ** 2
    n = len(sq)
    ms = math.fsum(sq) / n
    rms = math.sqrt(ms)
    if n < 2 or rms == 0:
        return rms, 0.0
    return rms, float(sq.std(ddof=1) / math.sqrt(n) / (2 * rms))


def _decay_task(args):
    f, base, W, S, t, kappa = args
    r = pushforward_integral(f, base, W, S, t, kappa)
    return r.value, r.error, r.n_intervals, r.converged


def _map(fn, tasks, workers: int):
    if workers <= 1:
        return [fn(a) for a in tasks]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, tasks, chunksize=1))


def haar_base_points(f: Observable, n: int, seed: int) -> np.ndarray:
    """``n`` Haar-random representatives from a dedicated stream of ``seed``."""
    return haar_sample_many(f.group, np.random.default_rng([seed, 0x5EED]), n)


def run_decay_experiment(f: Observable, W: AlgebraVector, S: float, t_grid, base_points,
                         kappa: float = 20.0, workers: int = 1) -> DecaySeries:
    """RMS over base points of |I(t)| for every t in ``t_grid``."""
    t_grid = np.asarray(t_grid, dtype=float)
    base_points = np.asarray(base_points, dtype=float)
    if len(base_points) < 4:
        raise ValueError("need at least four base points")
    tasks = [(f, p, W, S, float(t), kappa) for t in t_grid for p in base_points]
    out = _map(_decay_task, tasks, workers)
    m = len(base_points)
    vals = np.array([o[0] for o in out]).reshape(len(t_grid), m)
    errs = np.array([o[1] for o in out]).reshape(len(t_grid), m)
    nodes = np.array([o[2] for o in out]).reshape(len(t_grid), m).max(axis=1)
    conv = all(o[3] for o in out)
    agg = [rms_with_stderr(row) for row in vals]
    qerr = np.sqrt((errs**2).mean(axis=1))
    return DecaySeries(t_grid, np.array([a[0] for a in agg]), np.array([a[1] for a in agg]),
                       qerr, nodes, vals, errs, conv,
                       {"observable": f.label, "W": list(W), "S": S, "kappa": kappa,
                        "n_base_points": m})


# ---------------------------------------------------------------------------
# fitting

@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    log_correction: bool
    residual_rms: float
    log_coefficient: float = 0.0
    slope_stderr: float = 0.0
    n_points: int = 0

    def to_json(self) -> dict:
        return asdict(self)


def fit_decay(t, value, stderr=None, quad_error=None, model: str = "power",
              noise_factor: float = 10.0) -> FitResult:
    """Weighted least squares of log value on log t (and log log t for "power_log").

    Entries below ``noise_factor`` times their quadrature error are dropped;
    weights are 1/stderr**2 in log space when standard errors are available.
    """
    if model not in ("power", "power_log"):
        raise ValueError("model must be 'power' or 'power_log'")
    t = np.asarray(t, dtype=float)
    y = np.asarray(value, dtype=float)
    keep = np.ones(len(t), dtype=bool)
    if quad_error is not None:
        keep &= y > noise_factor * np.asarray(quad_error, dtype=float)
    if np.any(y[keep] <= 0):
        raise ValueError("fit requires positive values above the noise floor")
    if keep.sum() < 5:
        raise ValueError(f"fit needs at least 5 usable points, got {int(keep.sum())}")
    t, y = t[keep], y[keep]
    cols = [np.ones_like(t), np.log(t)]
    if model == "power_log":
        if np.any(t <= 1):
            raise ValueError("the log-corrected model needs t > 1")
        cols.append(np.log(np.log(t)))
    A = np.column_stack(cols)
    b = np.log(y)
    if stderr is not None:
        se = np.asarray(stderr, dtype=float)[keep] / y
        w = np.where(se > 0, 1.0 / np.maximum(se, 1e-300), 0.0)
        if not np.all(w > 0):
            w = np.ones_like(t)
    else:
        w = np.ones_like(t)
    coef, *_ = np.linalg.lstsq(A * w[:, None], b * w, rcond=None)
    resid = b - A @ coef
    dof = max(1, len(t) - A.shape[1])
    cov = np.linalg.pinv((A * w[:, None]).T @ (A * w[:, None]))
    scale = float((w * resid) @ (w * resid)) / dof
    slope_se = math.sqrt(max(0.0, cov[1, 1] * scale))
    return FitResult(float(coef[1]), float(coef[0]), model == "power_log",
                     float(math.sqrt(np.mean(resid**2))),
                     float(coef[2]) if model == "power_log" else 0.0, slope_se, len(t))


def fit_series(series: DecaySeries, model: str = "power", noise_factor: float = 10.0) -> FitResult:
    return fit_decay(series.t, series.value, series.stderr, series.quad_error, model, noise_factor)


# ---------------------------------------------------------------------------
# mixing

def _values_at(f: Observable, mats: np.ndarray) -> np.ndarray:
    return f.values(mats)


def mixing_correlation(f: Observable, g: Observable, t: float, n_mc: int,
                       rng: np.random.Generator) -> tuple[float, float]:
    """Monte Carlo <f o h_t, g> with its standard error."""
    p = haar_sample_many(f.group, rng, n_mc)
    prod = f.values(p @ exp_algebra(U, t)) * g.values(p)
    return math.fsum(prod) / n_mc, float(prod.std(ddof=1) / math.sqrt(n_mc))


def _fiber(f: Observable, P: np.ndarray, t: float, n_theta: int) -> float:
    args = f.kernel_args()
    val, status = _kernels.fiber_average(f.to_kernel_frame(P), exp_algebra(U, t), n_theta, *args)
    if status < 0:
        raise ReductionError("reduction exceeded the iteration cap")
    return val


def fiber_points(t: float, radius: float, k_theta: float = 2.0, minimum: int = 64) -> int:
    """Nodes on the circle p k(theta) exp(tU): its length is about pi t sqrt(4 + t**2)."""
    length = math.pi * t * math.sqrt(4 + t * t) if t > 0 else 1.0
    return max(minimum, int(math.ceil(k_theta * length / radius)))


def mixing_correlation_fiber(f: Observable, g: Observable, t: float, n_radial: int = 8,
                             n_angular: int = 16, k_theta: float = 2.0) -> float:
    """Deterministic <f o h_t, g> for a K-invariant g.

    Unfolding g's Poincare series gives (1 / vol) times the integral over
    SL(2, R) of phi_g(p) f(p exp(tU)); since phi_g depends only on p.i, the
    frame angle can be integrated first, f(p k(theta) exp(tU)) averaged over a
    full circle.  The outer integral runs over the disk supporting phi_g in
    polar coordinates (Gauss-Legendre in r, uniform in the angle).  Requires
    f to be exactly centered so g's subtracted mean drops out.
    """
    if not g.k_invariant:
        raise ValueError("the fiber estimator needs a K-invariant g")
    if g.bump.amplitude == 0 or f.is_zero:
        return 0.0
    rb2 = g.bump.radius**2
    k = g.bump.smoothness
    r_max = g.bump.support_radius()
    xg, wg = np.polynomial.legendre.leggauss(n_radial)
    rr = (xg + 1) / 2 * r_max
    wr = wg * r_max / 2
    n_theta = fiber_points(t, f.bump.radius, k_theta)
    terms = []
    for r, w in zip(rr, wr):
        prof = 1.0 - (2 * math.cosh(r) - 2) / rb2
        if prof <= 0:
            continue
        phi = g.bump.amplitude * prof**k
        ar = np.diag([math.exp(r / 2), math.exp(-r / 2)])
        for j in range(n_angular):
            alpha = 2 * math.pi * j / n_angular
            P = g.bump.center @ rotation(alpha / 2) @ ar
            terms.append(w * math.sinh(r) * (2 * math.pi / n_angular) * phi * _fiber(f, P, t, n_theta))
    return math.fsum(terms) / f.group.genus_area


def _fiber_task(args):
    f, g, t, nr, na, kt = args
    return mixing_correlation_fiber(f, g, t, nr, na, kt)


@dataclass
class MixingSeries:
    t: np.ndarray
    value: np.ndarray
    per_pair: np.ndarray
    metadata: dict = field(default_factory=dict)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "pair", "value"])
            for i, t in enumerate(self.t):
                for j in range(self.per_pair.shape[1]):
                    w.writerow([repr(float(t)), j, repr(float(self.per_pair[i, j]))])
                w.writerow([repr(float(t)), "rms", repr(float(self.value[i]))])


def run_mixing_experiment(pairs, t_grid, n_radial: int = 8, n_angular: int = 16,
                          k_theta: float = 2.0, workers: int = 1) -> MixingSeries:
    """Correlations for each (f, g) pair and their RMS envelope at every t.

    The correlation changes sign as t grows; the RMS over several pairs is a
    stable proxy for the decaying envelope.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    tasks = [(f, g, float(t), n_radial, n_angular, k_theta) for t in t_grid for f, g in pairs]
    out = np.array(_map(_fiber_task, tasks, workers)).reshape(len(t_grid), len(pairs))
    rms = np.sqrt((out**2).mean(axis=1))
    return MixingSeries(t_grid, rms, out, {"n_pairs": len(pairs), "n_radial": n_radial,
                                          "n_angular": n_angular, "k_theta": k_theta})


# ---------------------------------------------------------------------------
# shearing identity

def sup_arc_integral(f: Observable, t: float, sigma: float, base_points: np.ndarray,
                     kappa: float = 20.0) -> float:
    """max over base points and S in [0, sigma] of |integral_0^S f(p exp(sV) exp(tU)) ds|.

    The sup over p in M is estimated by a maximum over the given points.
    """
    args = f.kernel_args()
    n = 2 * node_count(V, sigma, t, f.bump.radius, kappa)
    R = exp_algebra(U, t)
    best = 0.0
    for p in base_points:
        val, status = _kernels.arc_running_max(f.to_kernel_frame(p), 1.0, 0.0, 0.0, R, sigma, n,
                                               *args)
        if status < 0:
            raise ReductionError("reduction exceeded the iteration cap")
        best = max(best, val)
    return best


def _arc_values(f: Observable, P: np.ndarray, R: np.ndarray, s: np.ndarray) -> np.ndarray:
    args = f.kernel_args()
    _, vals, status = _kernels.arc_values(f.to_kernel_frame(P), 1.0, 0.0, 0.0, R, s, *args)
    if status < 0:
        raise ReductionError("reduction exceeded the iteration cap")
    return vals


def integration_by_parts_terms(f: Observable, g: Observable, p: np.ndarray, t: float,
                               sigma: float, n_intervals: int, h: float = 1e-3):
    """Both sides of the pointwise integration by parts along the unstable horocycle.

    With F(S) = integral_0^S f(p h^u_s h_t) ds,
      (1/sigma) int_0^sigma f(p h^u_s h_t) g(p h^u_s) ds
        = (1/sigma) F(sigma) g(p h^u_sigma) - (1/sigma) int_0^sigma F(S) (Vg)(p h^u_S) dS.
    Vg is a central difference at step h.
    """
    s = np.linspace(0.0, sigma, n_intervals + 1)
    fv = _arc_values(f, p, exp_algebra(U, t), s)
    gv = _arc_values(g, p, np.eye(2), s)
    vg = (_arc_values(g, p, exp_algebra(V, h), s) - _arc_values(g, p, exp_algebra(V, -h), s)) / (2 * h)
    ds = sigma / n_intervals
    lhs = np.trapezoid(fv * gv, s) / sigma
    F = np.concatenate([[0.0], np.cumsum(0.5 * ds * (fv[:-1] + fv[1:]))])
    rhs = (F[-1] * gv[-1] - np.trapezoid(F * vg, s)) / sigma
    return lhs, rhs


def v_derivative_norm(g: Observable, p: np.ndarray, h: float = 1e-3) -> float:
    """||Vg||_2 over the sample ``p`` with Vg by central difference at step h."""
    vg = (g.values(p @ exp_algebra(V, h)) - g.values(p @ exp_algebra(V, -h))) / (2 * h)
    return math.sqrt(math.fsum(vg**2) / len(vg))


@dataclass
class ShearingReport:
    t: float
    sigma: float
    lhs: float
    lhs_stderr: float
    rhs: float
    rhs_stderr: float
    identity_ok: bool
    ibp_residual: float
    ibp_scale: float
    g_norm: float
    vg_norm: float
    sup_integral: float
    bound: float
    sharp_bound: float
    bound_ok: bool

    def to_json(self) -> dict:
        return {k: (bool(v) if isinstance(v, (bool, np.bool_)) else float(v))
                for k, v in asdict(self).items()}


def shearing_identity_check(f: Observable, g: Observable, t: float, sigma: float, n_mc: int,
                            rng: np.random.Generator, correlation: float | None = None,
                            n_sup: int = 32, n_ibp: int = 16, kappa: float = 20.0) -> ShearingReport:
    """Check the unstable-horocycle averaging identity and the resulting bound.

    * identity: <f o h_t, g> against (1/sigma) int <f o h_t o h^u_s, g o h^u_s> ds,
      both by Monte Carlo on independent samples, (p, s) drawn jointly for the
      right side; passes within 3 combined standard errors;
    * integration by parts: pointwise residual on ``n_ibp`` sample points;
    * bound: |<f o h_t, g>| <= (||g||_2 + ||Vg||_2) / sigma * sup |int_0^S f o h_t o h^u_s|,
      the sup over S and over ``n_sup`` Haar points.  ``correlation`` (e.g. the
      deterministic estimate) replaces the Monte Carlo left side in the bound.
    """
    group = f.group
    lhs, lhs_se = mixing_correlation(f, g, t, n_mc, rng)
    p = haar_sample_many(group, rng, n_mc)
    s = rng.random(n_mc) * sigma
    # exp(sV) = [[1, 0], [s, 1]]
    ev = np.zeros((n_mc, 2, 2))
    ev[:, 0, 0] = ev[:, 1, 1] = 1.0
    ev[:, 1, 0] = s
    q = p @ ev
    prod = f.values(q @ exp_algebra(U, t)) * g.values(q)
    rhs = math.fsum(prod) / n_mc
    rhs_se = float(prod.std(ddof=1) / math.sqrt(n_mc))
    identity_ok = abs(lhs - rhs) <= 3 * math.hypot(lhs_se, rhs_se)

    norm_pts = haar_sample_many(group, rng, n_mc)
    gv = g.values(norm_pts)
    g_norm = math.sqrt(math.fsum(gv**2) / n_mc)
    vg_norm = v_derivative_norm(g, norm_pts)

    sup_pts = haar_sample_many(group, rng, n_sup)
    sup = sup_arc_integral(f, t, sigma, sup_pts, kappa)

    n_int = 2 * node_count(V, sigma, t, min(f.bump.radius, g.bump.radius), kappa)
    resid, scale = 0.0, 0.0
    for pt in haar_sample_many(group, rng, n_ibp):
        a, b = integration_by_parts_terms(f, g, pt, t, sigma, n_int)
        resid = max(resid, abs(a - b))
        scale = max(scale, abs(a), abs(b))

    corr = lhs if correlation is None else correlation
    bound = (g_norm + vg_norm) / sigma * sup
    sharp = (g_norm / sigma + vg_norm) * sup
    return ShearingReport(t, sigma, lhs, lhs_se, rhs, rhs_se, identity_ok, resid, scale,
                          g_norm, vg_norm, sup, bound, sharp, abs(corr) <= bound)


def dump_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
