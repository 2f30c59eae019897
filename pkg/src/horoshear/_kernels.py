"""Compiled inner loops: greedy reduction, Poincare-series evaluation, arcs.

Matrices are passed as four scalars (a, b, c, d) inside the loops.  All sums
use Neumaier compensation and run in a fixed index order, so results are
bitwise reproducible for a given input.
"""

import math

import numba as nb
import numpy as np

_jit = nb.njit(cache=True, nogil=True)

REDUCE_TOL = 1e-12


@_jit
def center_distance(a, b, c, d):
    # cosh(dist(g.i, i)) - 1 = ((a - d)**2 + (b + c)**2) / 2 for det g = 1
    q = (a - d) * (a - d) + (b + c) * (b + c)
    return 2.0 * math.asinh(0.5 * math.sqrt(q))


@_jit
def exp_coeffs(v, x, u, s):
    delta = 0.25 * x * x + u * v
    z = delta * s * s
    if abs(z) < 1e-4:
        C = 1.0 + z / 2 + z * z / 24 + z * z * z / 720
        S = s * (1.0 + z / 6 + z * z / 120 + z * z * z / 5040)
    elif delta > 0:
        r = math.sqrt(delta)
        C = math.cosh(r * s)
        S = math.sinh(r * s) / r
    else:
        r = math.sqrt(-delta)
        C = math.cos(r * s)
        S = math.sin(r * s) / r
    return C + 0.5 * S * x, S * u, S * v, C - 0.5 * S * x


@_jit
def reduce_core(a, b, c, d, gens, ga, gb, gc, gd, max_iter):
    """Greedy Dirichlet descent of gamma.(a, b; c, d), starting from gamma.

    Returns the reduced entries, the accumulated gamma and the number of
    steps taken (-1 when the iteration cap was hit).  Callers start from the
    identity: feeding gamma back as a warm start along an arc lets its
    rounding error accumulate from node to node, so it drifts off the lattice.
    """
    A = ga * a + gb * c
    B = ga * b + gb * d
    C = gc * a + gd * c
    D = gc * b + gd * d
    steps = 0
    while True:
        q0 = (A - D) * (A - D) + (B + C) * (B + C)
        best = q0
        k = -1
        for j in range(gens.shape[0]):
            p = gens[j, 0, 0]
            q = gens[j, 0, 1]
            r = gens[j, 1, 0]
            s = gens[j, 1, 1]
            a2 = p * A + q * C
            b2 = p * B + q * D
            c2 = r * A + s * C
            d2 = r * B + s * D
            qq = (a2 - d2) * (a2 - d2) + (b2 + c2) * (b2 + c2)
            if qq < best:
                best = qq
                k = j
        if k < 0:
            break
        d_old = 2.0 * math.asinh(0.5 * math.sqrt(q0))
        d_new = 2.0 * math.asinh(0.5 * math.sqrt(best))
        if d_new >= d_old - REDUCE_TOL:
            break
        if steps >= max_iter:
            return A, B, C, D, ga, gb, gc, gd, -1
        p = gens[k, 0, 0]
        q = gens[k, 0, 1]
        r = gens[k, 1, 0]
        s = gens[k, 1, 1]
        A, B, C, D = p * A + q * C, p * B + q * D, r * A + s * C, r * B + s * D
        ga, gb, gc, gd = p * ga + q * gc, p * gb + q * gd, r * ga + s * gc, r * gb + s * gd
        steps += 1
    return A, B, C, D, ga, gb, gc, gd, steps


@_jit
def reduce_many(mats, gens, max_iter):
    n = mats.shape[0]
    out = np.empty_like(mats)
    steps = np.empty(n, dtype=np.int64)
    for i in range(n):
        A, B, C, D, _, _, _, _, st = reduce_core(
            mats[i, 0, 0], mats[i, 0, 1], mats[i, 1, 0], mats[i, 1, 1],
            gens, 1.0, 0.0, 0.0, 1.0, max_iter)
        out[i, 0, 0] = A
        out[i, 0, 1] = B
        out[i, 1, 0] = C
        out[i, 1, 1] = D
        steps[i] = st
    return out, steps


@_jit
def bump_sum(A, B, C, D, Q, rb2, power, kinv):
    """Sum over the lattice ball of (1 - rho**2 / rb2)_+ ** power."""
    val = 0.0
    for m in range(Q.shape[0]):
        h00 = Q[m, 0, 0] * A + Q[m, 0, 1] * C
        h01 = Q[m, 0, 0] * B + Q[m, 0, 1] * D
        h10 = Q[m, 1, 0] * A + Q[m, 1, 1] * C
        h11 = Q[m, 1, 0] * B + Q[m, 1, 1] * D
        if kinv:
            # ||h||^2 - 2 = (h00 - h11)^2 + (h01 + h10)^2 for det h = 1
            r2 = (h00 - h11) * (h00 - h11) + (h01 + h10) * (h01 + h10)
        else:
            r2 = (h00 - 1.0) * (h00 - 1.0) + h01 * h01 + h10 * h10 + (h11 - 1.0) * (h11 - 1.0)
        if r2 < rb2:
            w = 1.0 - r2 / rb2
            val += w ** power
    return val


@_jit
def observable_many(mats, gens, max_iter, Q, rb2, power, kinv, amplitude, mean):
    """Reduce each matrix and evaluate the centered Poincare series."""
    n = mats.shape[0]
    out = np.empty(n)
    status = 0
    for i in range(n):
        A, B, C, D, _, _, _, _, st = reduce_core(
            mats[i, 0, 0], mats[i, 0, 1], mats[i, 1, 0], mats[i, 1, 1],
            gens, 1.0, 0.0, 0.0, 1.0, max_iter)
        if st < 0:
            status = -1
        out[i] = amplitude * bump_sum(A, B, C, D, Q, rb2, power, kinv) - mean
    return out, status


@_jit
def _neumaier(total, comp, x):
    t = total + x
    if abs(total) >= abs(x):
        comp += (total - t) + x
    else:
        comp += (x - t) + total
    return t, comp


@_jit
def arc_sums(P, v, x, u, R, S, n_intervals, gens, max_iter,
             Q, rb2, power, kinv, amplitude, mean):
    """Trapezoid sums of f(P exp(sW) R) over s in [0, S].

    Uses n_intervals + 1 equispaced nodes (n_intervals even) and returns the
    fine-grid integral, the integral using every other node, and a status
    flag.  Every node is reduced from scratch.
    """
    h = S / n_intervals
    tot_f = 0.0
    cmp_f = 0.0
    tot_c = 0.0
    cmp_c = 0.0
    status = 0
    for j in range(n_intervals + 1):
        s = S * j / n_intervals
        e00, e01, e10, e11 = exp_coeffs(v, x, u, s)
        m00 = P[0, 0] * e00 + P[0, 1] * e10
        m01 = P[0, 0] * e01 + P[0, 1] * e11
        m10 = P[1, 0] * e00 + P[1, 1] * e10
        m11 = P[1, 0] * e01 + P[1, 1] * e11
        a = m00 * R[0, 0] + m01 * R[1, 0]
        b = m00 * R[0, 1] + m01 * R[1, 1]
        c = m10 * R[0, 0] + m11 * R[1, 0]
        d = m10 * R[0, 1] + m11 * R[1, 1]
        A, B, C, D, _, _, _, _, st = reduce_core(a, b, c, d, gens, 1.0, 0.0, 0.0, 1.0, max_iter)
        if st < 0:
            status = -1
        y = amplitude * bump_sum(A, B, C, D, Q, rb2, power, kinv) - mean
        wgt = 0.5 if (j == 0 or j == n_intervals) else 1.0
        tot_f, cmp_f = _neumaier(tot_f, cmp_f, wgt * y)
        if j % 2 == 0:
            tot_c, cmp_c = _neumaier(tot_c, cmp_c, wgt * y)
    return (tot_f + cmp_f) * h, (tot_c + cmp_c) * 2.0 * h, status


@_jit
def arc_values(P, v, x, u, R, s_nodes, gens, max_iter,
               Q, rb2, power, kinv, amplitude, mean):
    """Reduced points P exp(sW) R and observable values at given nodes."""
    n = s_nodes.shape[0]
    pts = np.empty((n, 2, 2))
    vals = np.empty(n)
    status = 0
    for j in range(n):
        e00, e01, e10, e11 = exp_coeffs(v, x, u, s_nodes[j])
        m00 = P[0, 0] * e00 + P[0, 1] * e10
        m01 = P[0, 0] * e01 + P[0, 1] * e11
        m10 = P[1, 0] * e00 + P[1, 1] * e10
        m11 = P[1, 0] * e01 + P[1, 1] * e11
        a = m00 * R[0, 0] + m01 * R[1, 0]
        b = m00 * R[0, 1] + m01 * R[1, 1]
        c = m10 * R[0, 0] + m11 * R[1, 0]
        d = m10 * R[0, 1] + m11 * R[1, 1]
        A, B, C, D, _, _, _, _, st = reduce_core(a, b, c, d, gens, 1.0, 0.0, 0.0, 1.0, max_iter)
        if st < 0:
            status = -1
        pts[j, 0, 0] = A
        pts[j, 0, 1] = B
        pts[j, 1, 0] = C
        pts[j, 1, 1] = D
        vals[j] = amplitude * bump_sum(A, B, C, D, Q, rb2, power, kinv) - mean
    return pts, vals, status


@_jit
def arc_running_max(P, v, x, u, R, S, n_intervals, gens, max_iter,
                    Q, rb2, power, kinv, amplitude, mean):
    """max over S' in the node grid of |trapezoid integral over [0, S']|."""
    h = S / n_intervals
    tot = 0.0
    cmp = 0.0
    best = 0.0
    prev = 0.0
    status = 0
    for j in range(n_intervals + 1):
        s = S * j / n_intervals
        e00, e01, e10, e11 = exp_coeffs(v, x, u, s)
        m00 = P[0, 0] * e00 + P[0, 1] * e10
        m01 = P[0, 0] * e01 + P[0, 1] * e11
        m10 = P[1, 0] * e00 + P[1, 1] * e10
        m11 = P[1, 0] * e01 + P[1, 1] * e11
        a = m00 * R[0, 0] + m01 * R[1, 0]
        b = m00 * R[0, 1] + m01 * R[1, 1]
        c = m10 * R[0, 0] + m11 * R[1, 0]
        d = m10 * R[0, 1] + m11 * R[1, 1]
        A, B, C, D, _, _, _, _, st = reduce_core(a, b, c, d, gens, 1.0, 0.0, 0.0, 1.0, max_iter)
        if st < 0:
            status = -1
        y = amplitude * bump_sum(A, B, C, D, Q, rb2, power, kinv) - mean
        if j > 0:
            tot, cmp = _neumaier(tot, cmp, 0.5 * h * (prev + y))
            if abs(tot + cmp) > best:
                best = abs(tot + cmp)
        prev = y
    return best, status


@_jit
def fiber_average(P, R, n_theta, gens, max_iter, Q, rb2, power, kinv, amplitude, mean):
    """Mean of f(P k(theta) R) over theta in [0, 2 pi) by the periodic trapezoid rule."""
    tot = 0.0
    cmp = 0.0
    status = 0
    for j in range(n_theta):
        th = 2.0 * math.pi * j / n_theta
        ct = math.cos(th)
        st_ = math.sin(th)
        m00 = P[0, 0] * ct + P[0, 1] * st_
        m01 = -P[0, 0] * st_ + P[0, 1] * ct
        m10 = P[1, 0] * ct + P[1, 1] * st_
        m11 = -P[1, 0] * st_ + P[1, 1] * ct
        a = m00 * R[0, 0] + m01 * R[1, 0]
        b = m00 * R[0, 1] + m01 * R[1, 1]
        c = m10 * R[0, 0] + m11 * R[1, 0]
        d = m10 * R[0, 1] + m11 * R[1, 1]
        A, B, C, D, _, _, _, _, stp = reduce_core(a, b, c, d, gens, 1.0, 0.0, 0.0, 1.0, max_iter)
        if stp < 0:
            status = -1
        y = amplitude * bump_sum(A, B, C, D, Q, rb2, power, kinv) - mean
        tot, cmp = _neumaier(tot, cmp, y)
    return (tot + cmp) / n_theta, status
