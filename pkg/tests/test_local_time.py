"""Tests for the discrete, mollified, and Fourier estimation routes."""

import json
import math

import numpy as np
import pytest

from fraclab.errors import CapabilityError, DomainError
from fraclab.fbm import FbmPath, Hurst, TimeGrid, simulate
from fraclab.kernels import catalogue_kernel, mollifier_deriv
from fraclab.local_time import (
    DltEstimate,
    StatisticSpec,
    dlt_profile,
    fourier_dlt,
    g_statistic,
    g_statistic_curve,
    mollified_dlt,
    mollified_dlt_curve,
    occupation_time,
)

SQRT_2PI = math.sqrt(2 * math.pi)


def make_path(values, n, horizon=1.0, hurst=0.5):
    return FbmPath(
        hurst=Hurst(hurst),
        grid=TimeGrid(n, horizon),
        values=np.asarray(values, dtype=np.float64),
        seed=0,
        method="cholesky",
    )


def constant_path(c, n=64, horizon=1.0):
    zero = make_path(np.zeros(TimeGrid(n, horizon).num_nodes), n, horizon)
    return zero.shifted(c)


class TestGStatistic:
    def test_zero_below_two_observations(self):
        path = make_path([0.0, 0.3, -0.1, 0.2, 0.5], 4)
        spec = StatisticSpec(ell=0, a=0.5, lam=0.0, t=0.25)  # n t = 1 < 2
        assert g_statistic(path, catalogue_kernel("gaussian(eps=1)"), spec).value == 0.0

    def test_zero_kernel_gives_zero(self):
        path = simulate(TimeGrid(64, 1.0), 0.3, 5)
        spec = StatisticSpec(ell=0, a=0.3, lam=0.4, t=1.0)
        assert g_statistic(path, catalogue_kernel("zero"), spec).value == 0.0

    def test_hand_summation(self):
        # n=4, t=1, a=0.5, lam=0, ell=0, gaussian(eps=1):
        # terms at X_{1/4}, X_{2/4}, X_{3/4} scaled by n^a = 2
        path = make_path([0.0, 0.1, -0.2, 0.3, -0.1], 4)
        spec = StatisticSpec(ell=0, a=0.5, lam=0.0, t=1.0)
        got = g_statistic(path, catalogue_kernel("gaussian(eps=1)"), spec, normalized=False)
        expected = sum(
            math.exp(-((2.0 * x) ** 2) / 2) / SQRT_2PI for x in (0.1, -0.2, 0.3)
        )
        assert got.value == pytest.approx(expected, rel=1e-14)
        assert got.route == "discrete"

    def test_normalization_factor(self):
        path = make_path([0.0, 0.1, -0.2, 0.3, -0.1], 4)
        spec = StatisticSpec(ell=1, a=0.5, lam=0.0, t=1.0)
        kern = catalogue_kernel("gaussian(eps=1)")
        raw = g_statistic(path, kern, spec, normalized=False).value
        norm = g_statistic(path, kern, spec, normalized=True).value
        assert norm == pytest.approx(raw * 4.0 ** (0.5 * 2 - 1), rel=1e-15)

    def test_capability_error(self):
        path = make_path([0.0, 0.1, -0.2, 0.3, -0.1], 4)
        spec = StatisticSpec(ell=5, a=0.5, lam=0.0, t=1.0)
        with pytest.raises(CapabilityError):
            g_statistic(path, catalogue_kernel("bump"), spec)

    def test_shift_equivariance_bitwise(self):
        # dyadic values keep every float operation exact
        rng = np.random.default_rng(3)
        vals = np.concatenate([[0.0], rng.integers(-64, 64, size=32) / 64.0])
        path = make_path(vals, 32)
        kern = catalogue_kernel("gaussian(eps=1)")
        c, lam = 0.5, 0.25
        spec_shifted = StatisticSpec(ell=0, a=0.5, lam=lam, t=1.0)
        spec_moved = StatisticSpec(ell=0, a=0.5, lam=lam - c, t=1.0)
        left = g_statistic(path.shifted(c), kern, spec_shifted).value
        right = g_statistic(path, kern, spec_moved).value
        assert left == right

    def test_consistency_across_orders_bitwise(self):
        path = simulate(TimeGrid(128, 1.0), 0.25, 9)
        g = catalogue_kernel("bump")
        spec1 = StatisticSpec(ell=1, a=0.25, lam=0.1, t=1.0)
        spec0 = StatisticSpec(ell=0, a=0.25, lam=0.1, t=1.0)
        lhs = g_statistic(path, g, spec1, normalized=False).value
        rhs = g_statistic(path, g.derivative(1), spec0, normalized=False).value
        assert lhs == rhs

    def test_curve_matches_pointwise(self):
        path = simulate(TimeGrid(64, 1.0), 0.3, 8)
        kern = catalogue_kernel("gaussian(eps=1)")
        ts = (0.25, 0.5, 1.0)
        curve = g_statistic_curve(path, kern, 0, 0.3, 0.2, ts)
        for t, v in zip(ts, curve):
            spec = StatisticSpec(ell=0, a=0.3, lam=0.2, t=t)
            assert v == pytest.approx(g_statistic(path, kern, spec).value, rel=1e-12)


class TestMollified:
    def test_constant_path_order_zero(self):
        c, eps, lam = 0.7, 0.09, 0.2
        path = constant_path(c)
        spec = StatisticSpec(ell=0, a=0.5, lam=lam, t=1.0)
        got = mollified_dlt(path, spec, eps).value
        assert got == pytest.approx(mollifier_deriv(0, eps, c - lam), rel=1e-12)

    def test_constant_path_at_level_odd_order(self):
        path = constant_path(0.4)
        spec = StatisticSpec(ell=1, a=0.5, lam=0.4, t=1.0)
        assert mollified_dlt(path, spec, 0.25).value == 0.0

    def test_time_additivity(self):
        path = simulate(TimeGrid(256, 1.0), 0.3, 21)
        eps = 0.05
        first = mollified_dlt(path, StatisticSpec(0, 0.3, 0.1, 0.5), eps).value
        second = mollified_dlt(path, StatisticSpec(0, 0.3, 0.1, 1.0), eps, t_start=0.5).value
        total = mollified_dlt(path, StatisticSpec(0, 0.3, 0.1, 1.0), eps).value
        assert first + second == pytest.approx(total, abs=1e-12)

    def test_partial_cell_endpoint(self):
        # non-grid-aligned horizon: trapezoid with interpolated final value
        path = make_path([0.0, 0.4, 0.8], 2)
        eps, lam, t = 0.04, 0.0, 0.75
        f = lambda x: mollifier_deriv(0, eps, x - lam)
        expected = 0.5 * (f(0.0) + f(0.4)) / 2 + 0.25 * (f(0.4) + f(0.6)) / 2
        got = mollified_dlt(path, StatisticSpec(0, 0.5, lam, t), eps).value
        assert got == pytest.approx(expected, rel=1e-12)

    def test_curve_matches_pointwise(self):
        path = simulate(TimeGrid(128, 1.0), 0.35, 13)
        curve = mollified_dlt_curve(path, 1, 0.02, 0.1, (0.25, 0.5, 1.0))
        for t, v in zip((0.25, 0.5, 1.0), curve):
            direct = mollified_dlt(path, StatisticSpec(1, 0.35, 0.1, t), 0.02).value
            assert v == pytest.approx(direct, rel=1e-12)

    def test_horizon_guard(self):
        path = simulate(TimeGrid(16, 1.0), 0.5, 2)
        with pytest.raises(DomainError):
            mollified_dlt(path, StatisticSpec(0, 0.5, 0.0, 1.5), 0.1)


class TestFourier:
    def test_constant_path_dirichlet(self):
        c, lam, t = 0.8, 0.1, 1.0
        path = constant_path(c)
        cutoff, step = 20.0, 20.0 / 2048
        got = fourier_dlt(path, StatisticSpec(0, 0.5, lam, t), cutoff, step).value
        delta = c - lam
        expected = t * math.sin(cutoff * delta) / (math.pi * delta)
        assert got == pytest.approx(expected, abs=1e-3)

    def test_constant_path_at_level(self):
        path = constant_path(0.3)
        cutoff, step = 15.0, 15.0 / 1024
        got = fourier_dlt(path, StatisticSpec(0, 0.5, 0.3, 1.0), cutoff, step).value
        assert got == pytest.approx(1.0 * cutoff / math.pi, rel=1e-6)

    def test_damped_fourier_equals_mollified(self):
        eps = 0.05
        cutoff = 12.0 / math.sqrt(eps)
        step = cutoff / 2048
        for seed, hurst, ell in ((3, 0.3, 0), (4, 0.5, 1)):
            path = simulate(TimeGrid(256, 1.0), hurst, seed)
            spec = StatisticSpec(ell, hurst, 0.1, 1.0)
            four = fourier_dlt(path, spec, cutoff, step, damping=eps).value
            moll = mollified_dlt(path, spec, eps).value
            assert four == pytest.approx(moll, rel=1e-6, abs=1e-9)

    def test_bad_arguments(self):
        path = constant_path(0.0, n=8)
        with pytest.raises(DomainError):
            fourier_dlt(path, StatisticSpec(0, 0.5, 0.0, 1.0), -1.0, 0.1)
        with pytest.raises(DomainError):
            fourier_dlt(path, StatisticSpec(0, 0.5, 0.0, 1.0), 1.0, 0.0)


class TestOccupation:
    def test_path_inside_interval(self):
        path = constant_path(0.2, n=32)
        assert occupation_time(path, (-1.0, 1.0), 1.0) == pytest.approx(1.0, abs=1e-12)

    def test_covering_interval(self):
        path = simulate(TimeGrid(64, 1.0), 0.4, 12)
        lo = float(path.values.min()) - 1.0
        hi = float(path.values.max()) + 1.0
        assert occupation_time(path, (lo, hi), 1.0) == pytest.approx(1.0, abs=1e-12)

    def test_sawtooth_geometry(self):
        # nodes at multiples of 1/4: values 0, .4, 0, .4, 0; indicator of
        # [0.25, 1]: nodes 1 and 3 inside -> trapezoid weight 1/4 each
        path = make_path([0.0, 0.4, 0.0, 0.4, 0.0], 4)
        got = occupation_time(path, (0.25, 1.0), 1.0)
        assert got == pytest.approx(0.5, abs=1e-12)

    def test_interval_validation(self):
        path = constant_path(0.0, n=8)
        with pytest.raises(DomainError):
            occupation_time(path, (1.0, 1.0), 1.0)


class TestProfile:
    def test_constant_path_profile(self):
        c, eps, t = 0.3, 0.04, 1.0
        path = constant_path(c)
        lams = np.linspace(-1, 1, 21)
        prof = dlt_profile(path, 0, eps, lams, t)
        for est in prof:
            assert est.value == pytest.approx(
                t * mollifier_deriv(0, eps, c - est.lam), rel=1e-12
            )

    def test_occupation_density_cross_check(self):
        n = 4096
        hurst = 0.3
        eps = float(n) ** (-2 * hurst)
        path = simulate(TimeGrid(n, 1.0), hurst, 31)
        lams = np.linspace(-0.5, 0.5, 801)
        prof = np.array([e.value for e in dlt_profile(path, 0, eps, lams, 1.0)])
        integral = np.trapezoid(prof, lams)
        occ = occupation_time(path, (-0.5, 0.5), 1.0)
        assert integral == pytest.approx(occ, rel=0.05)

    def test_level_derivative_relation(self):
        # d/dlam profile(ell-1) = -profile(ell), by mollifier calculus
        path = simulate(TimeGrid(512, 1.0), 0.3, 17)
        eps = 0.05
        h = 1e-4
        lams = np.linspace(-0.4, 0.4, 9)
        up = np.array([e.value for e in dlt_profile(path, 0, eps, lams + h, 1.0)])
        dn = np.array([e.value for e in dlt_profile(path, 0, eps, lams - h, 1.0)])
        fd = (up - dn) / (2 * h)
        order1 = np.array([e.value for e in dlt_profile(path, 1, eps, lams, 1.0)])
        scale = np.max(np.abs(order1)) + 1.0
        assert np.max(np.abs(fd + order1)) / scale < 5e-3


class TestDltEstimateSerialization:
    def test_json_round_trip(self):
        est = DltEstimate(
            value=1.25, route="mollified",
            params={"epsilon": 0.05, "n": 64, "t_start": 0.0},
            ell=1, lam=0.3, t=1.0,
        )
        back = DltEstimate.from_json(est.to_json())
        assert back == est
        payload = json.loads(est.to_json())
        assert payload["params"]["epsilon"] == 0.05
