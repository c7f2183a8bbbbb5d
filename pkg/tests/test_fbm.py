"""Tests for exact fBm simulation and the Gaussian covariance identities."""

import math

import numpy as np
import pytest

from fraclab.errors import DomainError, EmbeddingError, ResourceError
from fraclab import fbm
from fraclab.fbm import (
    FbmPath,
    GaussianConditioning,
    Hurst,
    TimeGrid,
    conditional_variance,
    cov,
    cov_matrix,
    det_decomposition,
    increment_inner_product,
    load_path,
    local_nondeterminism_probe,
    rng_for,
    save_path,
    simulate,
    subsample,
)


class TestHurstAndGrid:
    def test_hurst_rejects_out_of_range(self):
        for bad in (0.0, 1.0, -0.2, 1.7, float("nan")):
            with pytest.raises(DomainError):
                Hurst(bad)

    def test_grid_nodes_are_index_over_n(self):
        grid = TimeGrid(8, 1.0)
        assert grid.num_nodes == 9
        assert np.array_equal(grid.nodes, np.arange(9) / 8)

    def test_grid_partial_horizon(self):
        grid = TimeGrid(8, 0.9)
        assert grid.num_nodes == 8  # floor(7.2) + 1
        assert grid.nodes[-1] == 7 / 8

    def test_grid_rejects_bad_inputs(self):
        with pytest.raises(DomainError):
            TimeGrid(0, 1.0)
        with pytest.raises(DomainError):
            TimeGrid(4, -1.0)


class TestCovariance:
    def test_variance_at_one(self):
        for h in (0.1, 0.5, 0.9):
            assert cov(1.0, 1.0, h) == pytest.approx(1.0, abs=1e-15)

    def test_brownian_case(self):
        assert cov(1.0, 2.0, 0.5) == pytest.approx(1.0, abs=1e-15)

    def test_rough_case_closed_form(self):
        # 2^{0.6} / 2, evaluated independently
        assert cov(1.0, 2.0, 0.3) == pytest.approx(0.757858283255199, abs=1e-12)

    def test_symmetry_random(self):
        rng = rng_for(1, 2)
        for _ in range(1000):
            h = rng.uniform(0.02, 0.98)
            s, t = rng.uniform(0.0, 5.0, size=2)
            assert cov(s, t, h) == cov(t, s, h)

    def test_brownian_reduces_to_min(self):
        rng = rng_for(1, 3)
        for _ in range(1000):
            s, t = rng.uniform(0.0, 5.0, size=2)
            assert cov(s, t, 0.5) == pytest.approx(min(s, t), abs=1e-12)

    def test_negative_time_rejected(self):
        with pytest.raises(DomainError):
            cov(-0.1, 1.0, 0.5)


class TestIncrementInnerProduct:
    def test_disjoint_brownian_increments_vanish(self):
        assert increment_inner_product(0, 1, 1, 1, 0.5) == pytest.approx(0.0, abs=1e-15)

    def test_same_unit_increment(self):
        for h in (0.2, 0.5, 0.8):
            assert increment_inner_product(0, 1, 0, 1, h) == pytest.approx(1.0, abs=1e-12)

    def test_four_term_formula(self):
        # independent evaluation of E[(X_{u+h}-X_u)(X_{v+k}-X_v)]
        u, h, v, k, hurst = 0.0, 0.5, 2.0, 0.5, 0.7

        def r(s, t):
            return 0.5 * (s ** 1.4 + t ** 1.4 - abs(t - s) ** 1.4)

        expected = r(u + h, v + k) - r(u + h, v) - r(u, v + k) + r(u, v)
        got = increment_inner_product(u, h, v, k, hurst)
        assert got == pytest.approx(expected, abs=1e-14)
        bound = 2 ** (2 - 1.4) * 0.7 * abs(1.4 - 1) * h * k * (v - u) ** (1.4 - 2)
        assert abs(got) <= bound

    def test_nonpositive_width_rejected(self):
        with pytest.raises(DomainError):
            increment_inner_product(0, 0.0, 1, 1, 0.5)


class TestSimulation:
    def test_determinism(self):
        grid = TimeGrid(64, 1.0)
        for method in ("cholesky", "circulant"):
            a = simulate(grid, 0.3, 42, method)
            b = simulate(grid, 0.3, 42, method)
            assert np.array_equal(a.values, b.values)
            assert a.values[0] == 0.0

    def test_distinct_streams_differ(self):
        grid = TimeGrid(64, 1.0)
        a = simulate(grid, 0.3, 42, "circulant", stream=(0,))
        b = simulate(grid, 0.3, 42, "circulant", stream=(1,))
        assert not np.array_equal(a.values, b.values)

    def test_brownian_increment_variance(self):
        grid = TimeGrid(4, 1.0)
        incs = []
        for seed in range(4000):
            p = simulate(grid, 0.5, seed, "circulant")
            incs.append(np.diff(p.values))
        var = np.asarray(incs).var()
        assert var == pytest.approx(0.25, abs=0.02)

    def test_monte_carlo_covariance_matches_closed_form(self):
        m_reps = 2000
        grid = TimeGrid(256, 1.0)
        prods = np.empty(m_reps)
        for r in range(m_reps):
            p = simulate(grid, 0.3, 99, "circulant", stream=(r,))
            prods[r] = p.values[128] * p.values[256]
        assert prods.mean() == pytest.approx(cov(0.5, 1.0, 0.3), abs=4 / math.sqrt(m_reps))

    def test_unknown_method_rejected(self):
        with pytest.raises(DomainError):
            simulate(TimeGrid(4, 1.0), 0.5, 1, "hosking")

    def test_cholesky_resource_guard(self):
        with pytest.raises(ResourceError):
            simulate(TimeGrid(30000, 1.0), 0.5, 1, "cholesky")

    def test_circulant_negative_eigenvalue_diagnostic(self, monkeypatch):
        def fake_autocov(m, h):
            # lag-1 correlation 0.9 is not embeddable: eigenvalues 1 + 1.8 cos
            gamma = np.zeros(m + 1)
            gamma[0] = 1.0
            gamma[1] = 0.9
            return gamma

        monkeypatch.setattr(fbm, "_fgn_autocov", fake_autocov)
        with pytest.raises(EmbeddingError, match="cholesky"):
            simulate(TimeGrid(64, 1.0), 0.3, 1, "circulant")


class TestSubsample:
    def test_identity_factor(self):
        p = simulate(TimeGrid(8, 1.0), 0.4, 7)
        assert subsample(p, 1) is p

    def test_index_selection(self):
        p = simulate(TimeGrid(8, 1.0), 0.4, 7)
        sub = subsample(p, 2)
        assert sub.grid.n == 4
        assert np.array_equal(sub.values, p.values[[0, 2, 4, 6, 8]])

    def test_partial_horizon_node_count(self):
        p = simulate(TimeGrid(8, 0.9), 0.4, 7)
        sub = subsample(p, 2)
        assert sub.grid.num_nodes == 4  # floor(3.6) + 1
        assert np.array_equal(sub.values, p.values[[0, 2, 4, 6]])

    def test_nested_view_equals_manual_construction(self):
        p = simulate(TimeGrid(64, 1.0), 0.3, 11)
        sub = subsample(p, 4)
        manual = FbmPath(
            hurst=p.hurst,
            grid=TimeGrid(16, 1.0),
            values=p.values[::4].copy(),
            seed=p.seed,
            method=p.method,
        )
        assert np.array_equal(sub.values, manual.values)

    def test_nondividing_factor_rejected(self):
        p = simulate(TimeGrid(8, 1.0), 0.4, 7)
        with pytest.raises(DomainError):
            subsample(p, 3)


class TestConditionalVariance:
    def test_brownian_independent_increment(self):
        q = GaussianConditioning(2.0, (1.0,), Hurst(0.5))
        assert conditional_variance(q) == pytest.approx(1.0, abs=1e-12)

    def test_empty_conditioning_is_marginal_variance(self):
        q = GaussianConditioning(1.7, (), Hurst(0.3))
        assert conditional_variance(q) == pytest.approx(1.7 ** 0.6, abs=1e-12)

    def test_two_point_regression_against_dense_solve(self):
        h = 0.3
        t, conds = 1.5, np.array([1.0, 2.0])
        sigma = cov_matrix(conds, h)
        r = np.array([cov(1.0, t, h), cov(2.0, t, h)])
        expected = cov(t, t, h) - r @ np.linalg.solve(sigma, r)
        q = GaussianConditioning(t, (1.0, 2.0), Hurst(h))
        assert conditional_variance(q) == pytest.approx(expected, rel=1e-10)

    def test_monotone_under_larger_conditioning_sets(self):
        rng = rng_for(5, 1)
        for _ in range(200):
            h = rng.uniform(0.1, 0.9)
            times = rng.uniform(0.05, 3.0, size=4)
            if len(set(times.tolist())) != 4:
                continue
            t, rest = times[0], times[1:]
            small = conditional_variance(GaussianConditioning(t, tuple(rest[:1]), Hurst(h)))
            big = conditional_variance(GaussianConditioning(t, tuple(rest), Hurst(h)))
            assert big <= small + 1e-10

    def test_duplicate_times_rejected(self):
        with pytest.raises(DomainError):
            GaussianConditioning(1.0, (1.0,), Hurst(0.5))


class TestDetDecomposition:
    def test_single_time(self):
        det, prod = det_decomposition([1.0], 0.3)
        assert det == pytest.approx(1.0, abs=1e-12)
        assert prod == pytest.approx(1.0, abs=1e-12)

    def test_brownian_two_by_two(self):
        det, prod = det_decomposition([1.0, 2.0], 0.5)
        assert det == pytest.approx(1.0, abs=1e-10)
        assert prod == pytest.approx(1.0, abs=1e-10)

    def test_three_times_rough(self):
        det, prod = det_decomposition([0.5, 1.0, 1.7], 0.25)
        assert det == pytest.approx(prod, rel=1e-8)

    def test_random_sets_across_hurst(self):
        rng = rng_for(6, 1)
        for h in (0.2, 0.5, 0.8):
            for _ in range(60):
                size = int(rng.integers(1, 7))
                times = np.sort(rng.uniform(0.1, 3.0, size=size))
                if len(set(times.tolist())) != size:
                    continue
                det, prod = det_decomposition(times, h)
                assert det == pytest.approx(prod, rel=1e-8, abs=1e-12)

    def test_duplicates_rejected(self):
        with pytest.raises(DomainError):
            det_decomposition([1.0, 1.0], 0.5)


def test_local_nondeterminism_ratio_positive():
    for h in (0.2, 0.5, 0.8):
        ratio = local_nondeterminism_probe(200, h, seed=3)
        assert ratio > 0.0


class TestPathIO:
    def test_binary_round_trip(self, tmp_path):
        p = simulate(TimeGrid(32, 1.0), 0.35, 17, "circulant")
        file = str(tmp_path / "p.fbm")
        save_path(p, file, "binary")
        q = load_path(file)
        assert np.array_equal(q.values, p.values)
        assert q.hurst == p.hurst
        assert q.grid == p.grid
        assert (q.seed, q.method) == (p.seed, p.method)

    def test_csv_round_trip(self, tmp_path):
        p = simulate(TimeGrid(32, 1.0), 0.35, 17, "cholesky")
        file = str(tmp_path / "p.csv")
        save_path(p, file, "csv")
        q = load_path(file)
        assert np.array_equal(q.values, p.values)
        assert q.method == "cholesky"

    def test_bad_file_rejected(self, tmp_path):
        file = tmp_path / "junk.txt"
        file.write_text("not a path file\n")
        with pytest.raises(DomainError):
            load_path(str(file))


def test_path_values_immutable():
    p = simulate(TimeGrid(16, 1.0), 0.4, 3)
    with pytest.raises(ValueError):
        p.values[0] = 1.0
