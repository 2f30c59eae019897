import math
from dataclasses import replace

import numpy as np
import pytest
from scipy import integrate, optimize

from horoshear.lattice import (haar_sample_many, hyp_dist, mobius, reduce, rotation,
                               translation_to)
from horoshear.lie import U, V, X, AlgebraVector, exp_algebra, inverse
from horoshear.observables import (BumpSpec, Observable, build_observable, bump_eval,
                                   default_center, frame_derivatives, haar_integral,
                                   k_invariant_observable, make_zero_average, monte_carlo_mean,
                                   observable_eval, probe_points, sobolev_proxy)


def frob_dev(g):
    return math.sqrt(((g - np.eye(2)) ** 2).sum())


class TestBump:
    def test_center_gives_amplitude(self):
        spec = BumpSpec(np.eye(2), 0.7, amplitude=2.5)
        assert bump_eval(spec, np.eye(2)) == 2.5

    def test_outside_support(self):
        spec = BumpSpec(np.eye(2), 0.5)
        g = exp_algebra(X, 2.0)
        assert frob_dev(g) > 0.5 and bump_eval(spec, g) == 0.0

    def test_half_radius_value(self):
        rb = 0.6
        s = optimize.brentq(lambda s: frob_dev(exp_algebra(V, s)) - rb / 2, 0, 1, xtol=1e-15)
        g0 = translation_to(0.2 + 1.1j)
        spec = BumpSpec(g0, rb)
        assert bump_eval(spec, g0 @ exp_algebra(V, s)) == pytest.approx(0.75**6, rel=1e-12)

    def test_k_invariant_profile(self):
        # the surface profile depends on 4 sinh(d/2)**2 only
        g0 = translation_to(0.3 + 1.2j)
        spec = BumpSpec(g0, 1.0, k_invariant=True)
        g = translation_to(0.5 + 1.5j) @ rotation(0.7)
        d = hyp_dist(0.3 + 1.2j, 0.5 + 1.5j)
        assert bump_eval(spec, g) == pytest.approx((1 - 4 * math.sinh(d / 2) ** 2) ** 6, rel=1e-12)

    def test_support_radius_is_sharp_for_k_invariant(self):
        spec = BumpSpec(np.eye(2), 0.9, k_invariant=True)
        r = spec.support_radius()
        a = lambda t: np.diag([math.exp(t / 2), math.exp(-t / 2)])
        assert bump_eval(spec, a(r * 0.999)) > 0 and bump_eval(spec, a(r * 1.001)) == 0

    def test_support_radius_bounds_general(self, rng):
        spec = BumpSpec(np.eye(2), 0.8)
        R = spec.support_radius()
        for _ in range(2000):
            g = exp_algebra(AlgebraVector(*rng.normal(size=3)), rng.uniform(0, 1.5))
            if bump_eval(spec, g) > 0:
                assert hyp_dist(mobius(g, 1j), 1j) <= R

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            BumpSpec(np.eye(2), 0.0)
        with pytest.raises(ValueError):
            BumpSpec(np.eye(2), 1.0, smoothness=3)
        with pytest.raises(ValueError):
            BumpSpec(2 * np.eye(2), 1.0)

    def test_json_roundtrip(self):
        spec = BumpSpec(translation_to(0.1 + 2j), 0.4, 7, -1.5, True)
        back = BumpSpec.from_json(spec.to_json())
        assert np.array_equal(back.center, spec.center)
        assert back.to_json() == spec.to_json()


class TestHaarIntegral:
    def test_k_invariant_closed_form(self):
        # oracle: integrate (1 - 4 sinh(r/2)**2 / r_b**2)**k 2 pi sinh r dr, times 2 pi
        spec = BumpSpec(np.eye(2), 0.9, k_invariant=True)
        val, _ = integrate.quad(lambda r: max(0.0, 1 - 4 * math.sinh(r / 2) ** 2 / 0.81) ** 6
                                * 2 * math.pi * math.sinh(r), 0, spec.support_radius())
        assert haar_integral(spec) == pytest.approx(2 * math.pi * val, rel=1e-10)

    def test_general_against_monte_carlo(self, rng):
        # g = k(phi/2) a(r) k(b) with measure sinh r dr dphi db and tr g = 2 cosh(r/2) cos(phi/2 + b)
        spec = BumpSpec(np.eye(2), 0.7)
        R = spec.support_radius()
        n = 200_000
        a, b = rng.uniform(0, 2 * math.pi, n), rng.uniform(0, 2 * math.pi, n)
        r = rng.uniform(0, R, n)
        c = np.cosh(r / 2)
        rho2 = 4 * c * (c - np.cos(a / 2 + b))
        w = np.clip(1 - rho2 / 0.49, 0, None) ** 6 * np.sinh(r)
        vol = (2 * math.pi) ** 2 * R
        est = vol * w.mean()
        se = vol * w.std() / math.sqrt(n)
        assert abs(haar_integral(spec) - est) <= 4 * se


class TestObservable:
    def test_gamma_invariance(self, group, kinv, general, rng):
        for f in (kinv, general):
            mats = haar_sample_many(group, rng, 100)
            for g in group.generators:
                assert np.abs(f.values(mats) - f.values(g @ mats)).max() <= 1e-8

    def test_python_eval_matches_kernel(self, group, general, rng):
        for g in haar_sample_many(group, rng, 50):
            p = reduce(g, group)
            assert observable_eval(general, p) == pytest.approx(general(g), abs=1e-12)

    def test_truncation_complete(self, group, kinv):
        # a bump far from the center still needs no elements outside its ball
        f = k_invariant_observable(group, 1.7 + 0.4j, 0.8)
        mats = haar_sample_many(group, np.random.default_rng(5), 2000)
        raw = np.zeros(len(mats))
        for gamma in f.ball:
            raw += np.array([bump_eval(f.bump, gamma @ m) for m in mats])
        assert np.abs(raw - f.mean_hat - f.values(mats)).max() <= 1e-12
        assert len(f.ball) > 1

    def test_k_invariance(self, group, kinv, rng):
        mats = haar_sample_many(group, rng, 100)
        for theta in rng.uniform(0, 2 * math.pi, 100):
            assert np.abs(kinv.values(mats @ rotation(theta)) - kinv.values(mats)).max() <= 1e-8

    def test_general_not_k_invariant(self, group, general):
        p = general.bump.center @ exp_algebra(X, 0.3)
        assert abs(general(p @ rotation(1.0)) - general(p)) > 1e-3

    def test_centered_mean(self, group, kinv, general):
        for f in (kinv, general):
            mean, se = monte_carlo_mean(f, 100_000, np.random.default_rng(11))
            assert abs(mean) <= 3 * se

    def test_zero_amplitude(self, group):
        f = k_invariant_observable(group, 0.3 + 1.2j, 1.0, amplitude=0.0)
        assert f.mean_hat == 0 and f.is_zero
        mats = haar_sample_many(group, np.random.default_rng(2), 100)
        assert not f.values(mats).any()
        assert sobolev_proxy(f, 2) == 0.0

    def test_immutable(self, kinv):
        with pytest.raises(Exception):
            kinv.mean_hat = 1.0


class TestCentering:
    def test_monte_carlo_close_to_quadrature(self, group, kinv):
        f = make_zero_average(kinv, 100_000, np.random.default_rng(3))
        assert abs(f.mean_hat - kinv.mean_hat) <= 4 * f.mean_stderr
        assert f.centering == "monte-carlo" and f.mean_stderr > 0

    def test_idempotent_up_to_noise(self, kinv):
        a = make_zero_average(kinv, 20_000, np.random.default_rng(4))
        b = make_zero_average(a, 20_000, np.random.default_rng(5))
        assert abs(a.mean_hat - b.mean_hat) <= 3 * math.hypot(a.mean_stderr, b.mean_stderr)

    def test_linear_in_amplitude(self, kinv):
        a = make_zero_average(kinv, 20_000, np.random.default_rng(6))
        b = make_zero_average(kinv.with_amplitude(2.0), 20_000, np.random.default_rng(6))
        assert b.mean_hat == pytest.approx(2 * a.mean_hat, rel=1e-12)

    def test_zero_bump(self, kinv):
        z = make_zero_average(kinv.with_amplitude(0.0), 10_000, np.random.default_rng(7))
        assert z.mean_hat == 0.0

    def test_sample_floor(self, kinv):
        with pytest.raises(ValueError):
            make_zero_average(kinv, 1000, np.random.default_rng(8))

    def test_build_monte_carlo(self, group):
        spec = BumpSpec(translation_to(0.3 + 1.2j), 1.0, k_invariant=True)
        f = build_observable(spec, group, centering="monte-carlo",
                             rng=np.random.default_rng(9), n_mc=20_000)
        q = build_observable(spec, group)
        assert abs(f.mean_hat - q.mean_hat) <= 4 * f.mean_stderr
        with pytest.raises(ValueError):
            build_observable(spec, group, centering="median")


class TestSobolevProxy:
    def test_linear(self, general):
        for order in (1, 2):
            assert sobolev_proxy(general.with_amplitude(2.0), order) == pytest.approx(
                2 * sobolev_proxy(general, order), rel=1e-6)

    def test_monotone_in_order(self, kinv):
        vals = [sobolev_proxy(kinv, k) for k in range(4)]
        assert all(a < b for a, b in zip(vals, vals[1:]))

    def test_order_bounds(self, kinv):
        with pytest.raises(ValueError):
            sobolev_proxy(kinv, 7)

    def test_halving_radius(self, group):
        ratios = []
        for k_inv in (True, False):
            g0 = default_center(group)
            big = build_observable(BumpSpec(g0, 0.8, k_invariant=k_inv), group)
            small = build_observable(BumpSpec(g0, 0.4, k_invariant=k_inv), group)
            ratios.append(sobolev_proxy(small, 1) / sobolev_proxy(big, 1))
        assert all(1.5 <= r <= 4 for r in ratios), ratios

    def test_derivative_matches_flow(self, general):
        # D_X f(g) is the derivative of f(g exp(sX)) at s = 0
        g = probe_points(general.bump)[10]
        d = frame_derivatives(general, g[None], 1)["X"][0]
        h = 1e-4
        fd = (general(g @ exp_algebra(X, h)) - general(g @ exp_algebra(X, -h))) / (2 * h)
        assert d == pytest.approx(fd, rel=1e-4)

    @pytest.mark.parametrize("order", [1, 2, 3, 4])
    def test_second_order_convergence(self, general, order):
        # central differences: halving the step quarters the error, up to order k - 2
        g = general.bump.center @ exp_algebra(AlgebraVector(0.3, -0.2, 0.25), 1.0)
        word = "VXU"[order % 3] * order
        hs = [0.08, 0.04, 0.02]
        d = [frame_derivatives(general, g[None], order, step=h)[word][0] for h in hs]
        ratio = (d[0] - d[1]) / (d[1] - d[2])
        assert ratio == pytest.approx(4.0, rel=0.2)
