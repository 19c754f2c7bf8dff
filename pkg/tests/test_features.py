import math
from itertools import product

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from rbpca import (
    BernoulliFeatureMap,
    GaussianKernelParams,
    ParameterError,
    DataError,
    approx_kernel,
    exact_gaussian_kernel,
    new_bernoulli_map,
    new_fourier_map,
    spectral_error,
    spectral_error_bound,
)
from rbpca.features import bernoulli_kernel_expectation, median_heuristic, resolve_width

SQRT2 = math.sqrt(2.0)


def scalar_bernoulli_feature(x, support, p, c, u):
    # independent scalar evaluation of one feature
    num = sum(x[i] for i in support) - p * sum(x)
    return SQRT2 * math.cos(num / math.sqrt(c * p * (1 - p) / 2) + u)


class TestBernoulliMap:
    def test_draw_is_reproducible(self):
        a = new_bernoulli_map(5, 3, 0.5, 2.0, seed=42)
        b = new_bernoulli_map(5, 3, 0.5, 2.0, seed=42)
        assert a == b
        assert a.supports == b.supports
        assert np.array_equal(a.u, b.u)

    def test_different_seeds_differ(self):
        assert new_bernoulli_map(5, 50, 0.5, 2.0, 1) != new_bernoulli_map(5, 50, 0.5, 2.0, 2)

    def test_nonzero_count_matches_p(self):
        totals = np.array([len(new_bernoulli_map(3, 150, 0.05, 1.0, s).indices)
                           for s in range(500)])
        se = totals.std(ddof=1) / np.sqrt(totals.size)
        assert abs(totals.mean() - 22.5) < 3 * se

    def test_near_one_probability(self):
        hits = sum(new_bernoulli_map(1, 1, 0.999, 1.0, s).supports[0] == (0,)
                   for s in range(10_000))
        assert 9960 <= hits <= 10_000

    def test_invariants(self):
        fmap = new_bernoulli_map(7, 400, 0.3, 5.0, 3)
        assert np.all((fmap.indices >= 0) & (fmap.indices < 7))
        assert all(list(s) == sorted(set(s)) for s in fmap.supports)
        assert np.all((fmap.u >= 0) & (fmap.u < 2 * np.pi))
        with pytest.raises(ValueError):
            fmap.u[0] = 1.0

    @pytest.mark.parametrize("kwargs, name", [
        (dict(D=0, m=5, p=0.5, c=1.0), "D"),
        (dict(D=3, m=0, p=0.5, c=1.0), "m"),
        (dict(D=3, m=5, p=1.5, c=1.0), "p"),
        (dict(D=3, m=5, p=0.0, c=1.0), "p"),
        (dict(D=3, m=5, p=0.5, c=-1.0), "c"),
    ])
    def test_rejects_bad_parameters(self, kwargs, name):
        with pytest.raises(ParameterError, match=name):
            new_bernoulli_map(seed=0, **kwargs)

    def test_from_supports_rejects_duplicates_and_range(self):
        with pytest.raises(ParameterError):
            BernoulliFeatureMap.from_supports(3, [(0, 0)], [0.0], 0.5, 1.0)
        with pytest.raises(ParameterError):
            BernoulliFeatureMap.from_supports(3, [(3,)], [0.0], 0.5, 1.0)
        with pytest.raises(ParameterError):
            BernoulliFeatureMap.from_supports(3, [(1,)], [2 * np.pi], 0.5, 1.0)


class TestBernoulliEmbed:
    def test_zero_input_zero_phase(self):
        fmap = BernoulliFeatureMap.from_supports(4, [(0, 2), (), (1,)], [0.0, 0.0, 0.0], 0.2, 3.0)
        assert np.array_equal(fmap.embed(np.zeros(4)), np.full(3, SQRT2))

    def test_hand_instance(self):
        fmap = BernoulliFeatureMap.from_supports(2, [(0,)], [np.pi / 2], 0.5, 2.0)
        expected = SQRT2 * math.cos(2 + math.pi / 2)
        assert fmap.embed(np.array([1.0, -1.0]))[0] == pytest.approx(expected, abs=1e-14)

    def test_matches_scalar_oracle(self, rng):
        fmap = new_bernoulli_map(6, 40, 0.3, 4.0, 9)
        x = rng.normal(size=6)
        expected = [scalar_bernoulli_feature(x, s, 0.3, 4.0, u)
                    for s, u in zip(fmap.supports, fmap.u)]
        np.testing.assert_allclose(fmap.embed(x), expected, rtol=0, atol=1e-12)

    @pytest.mark.parametrize("D, m", [(3, 150), (40, 60)])
    def test_sparse_equals_dense(self, rng, D, m):
        # (3, 150) takes the grouped path, (40, 60) the per-feature path
        fmap = new_bernoulli_map(D, m, 0.05, 9.0, 4)
        assert fmap._tables[4] == (D == 3)
        X = rng.normal(size=(25, D))
        B = fmap.dense_directions()
        dense = SQRT2 * np.cos((X @ (B - fmap.p).T) / fmap.scale + fmap.u)
        np.testing.assert_allclose(fmap.embed_batch(X), dense, rtol=0, atol=1e-12)

    def test_batch_equals_loop(self, rng):
        fmap = new_bernoulli_map(5, 80, 0.2, 3.0, 0)
        X = rng.normal(size=(30, 5))
        loop = np.array([fmap.embed(x) for x in X])
        assert np.array_equal(fmap.embed_batch(X), loop)
        assert fmap.embed_batch(X).shape == (30, 80)
        assert np.array_equal(fmap.embed_batch(X[:1])[0], fmap.embed(X[0]))

    @settings(max_examples=60, deadline=None)
    @given(arrays(np.float64, (4, 3), elements=st.floats(-1e3, 1e3)),
           st.integers(0, 2**32 - 1))
    def test_bounded(self, X, seed):
        Z = new_bernoulli_map(3, 150, 0.05, 2.0, seed).embed_batch(X)
        assert np.all(np.abs(Z) <= SQRT2)

    def test_dimension_mismatch(self):
        fmap = new_bernoulli_map(3, 5, 0.5, 1.0, 0)
        with pytest.raises(DataError):
            fmap.embed(np.zeros(4))
        with pytest.raises(DataError):
            fmap.embed_batch(np.zeros((2, 2)))


class TestBernoulliExpectation:
    def test_enumeration_oracle(self):
        # exact expectation by enumerating all 0/1 directions in D=3
        p, c = 0.3, 2.5
        delta = np.array([0.7, -1.2, 0.4])
        scale = math.sqrt(c * p * (1 - p) / 2)
        total = 0.0
        for b in product([0, 1], repeat=3):
            b = np.array(b)
            prob = np.prod(np.where(b == 1, p, 1 - p))
            total += prob * math.cos(delta @ (b - p) / scale)
        assert bernoulli_kernel_expectation(delta, p, c) == pytest.approx(total, abs=1e-14)

    def test_monte_carlo_mean_matches(self, rng):
        x, y = rng.normal(size=3), rng.normal(size=3)
        fmap = new_bernoulli_map(3, 200_000, 0.05, 3.0, 5)
        prod = fmap.embed(x) * fmap.embed(y)
        se = prod.std(ddof=1) / np.sqrt(prod.size)
        assert abs(prod.mean() - bernoulli_kernel_expectation(x - y, 0.05, 3.0)) < 4 * se

    def test_approaches_gaussian_for_wide_kernels(self):
        delta = np.array([0.5, -0.3, 0.2])
        gauss = lambda c: math.exp(-delta @ delta / c)
        gaps = [abs(bernoulli_kernel_expectation(delta, 0.05, c) - gauss(c))
                for c in (3.0, 30.0, 300.0, 3000.0)]
        assert all(a > b for a, b in zip(gaps, gaps[1:]))
        assert gaps[-1] < 1e-4


class TestFourierMap:
    def test_zero_input(self):
        fmap = new_fourier_map(3, 10, 2.0, 0)
        fmap = type(fmap)(D=3, c=2.0, W=fmap.W, u=np.zeros(10))
        assert np.array_equal(fmap.embed(np.zeros(3)), np.full(10, SQRT2))

    def test_directions_have_kernel_variance(self):
        W = new_fourier_map(4, 50_000, 5.0, 1).W
        assert W.var() == pytest.approx(2 / 5.0, rel=0.02)

    def test_pair_unbiased(self, rng):
        x, y = rng.normal(size=3), rng.normal(size=3)
        fmap = new_fourier_map(3, 100_000, 4.0, 7)
        prod = fmap.embed(x) * fmap.embed(y)
        se = prod.std(ddof=1) / np.sqrt(prod.size)
        assert abs(prod.mean() - math.exp(-np.sum((x - y) ** 2) / 4.0)) < 3 * se

    def test_bounded_and_reproducible(self, rng):
        X = rng.normal(size=(20, 3)) * 50
        a = new_fourier_map(3, 64, 1.0, 3)
        assert np.all(np.abs(a.embed_batch(X)) <= SQRT2)
        assert a == new_fourier_map(3, 64, 1.0, 3)


class TestKernels:
    def test_exact_kernel_unit_diagonal_and_half(self):
        c = 1.7
        X = np.array([[0.0, 0.0], [math.sqrt(c * math.log(2)), 0.0]])
        K = exact_gaussian_kernel(X, c)
        assert np.all(np.diag(K) == 1.0)
        assert K[0, 1] == pytest.approx(0.5, abs=1e-15)

    def test_exact_kernel_scalar_oracle(self):
        X = np.array([[0.0, 1.0], [2.0, -1.0], [0.5, 0.5]])
        K = exact_gaussian_kernel(X, 1.0)
        for i in range(3):
            for j in range(3):
                d2 = (X[i, 0] - X[j, 0]) ** 2 + (X[i, 1] - X[j, 1]) ** 2
                assert K[i, j] == pytest.approx(math.exp(-d2), abs=1e-15)
        assert np.array_equal(K, K.T)

    def test_kernel_params(self):
        with pytest.raises(ParameterError):
            GaussianKernelParams(0.0)
        with pytest.raises(ParameterError):
            exact_gaussian_kernel(np.zeros((2, 2)), -1)

    def test_approx_kernel_constant_column(self):
        K = approx_kernel(np.full((4, 1), SQRT2))
        np.testing.assert_allclose(K, np.full((4, 4), 2.0))

    @settings(max_examples=40, deadline=None)
    @given(arrays(np.float64, (12, 3), elements=st.floats(-100, 100)),
           st.integers(0, 2**32 - 1), st.integers(1, 60))
    def test_approx_kernel_psd(self, X, seed, m):
        K = approx_kernel(new_bernoulli_map(3, m, 0.05, 3.0, seed).embed_batch(X))
        lam = np.linalg.eigvalsh(K)
        assert np.array_equal(K, K.T)
        assert lam[0] >= -1e-10 * max(lam[-1], 1.0)
        assert np.all(np.abs(K) <= 2.0 + 1e-12)

    def test_fourier_concentration(self, small_normalized):
        X = small_normalized[:50]
        c = median_heuristic(small_normalized)
        K = exact_gaussian_kernel(X, c)
        Khat = approx_kernel(new_fourier_map(3, 100_000, c, 0).embed_batch(X))
        assert np.abs(Khat - K).max() < 0.05

    def test_bernoulli_concentrates_on_its_expectation(self, small_normalized):
        X = small_normalized[:50]
        c = 90.0
        E = bernoulli_kernel_expectation(X[:, None, :] - X[None, :, :], 0.05, c)
        Khat = approx_kernel(new_bernoulli_map(3, 100_000, 0.05, c, 0).embed_batch(X))
        assert np.abs(Khat - E).max() < 0.05

    @pytest.mark.xfail(strict=True, reason="Bernoulli features are biased for the Gaussian "
                       "kernel at D=3; the estimator converges to its own expectation instead")
    def test_bernoulli_concentration_on_gaussian(self, small_normalized):
        X = small_normalized[:50]
        K = exact_gaussian_kernel(X, 90.0)
        Khat = approx_kernel(new_bernoulli_map(3, 100_000, 0.05, 90.0, 0).embed_batch(X))
        assert np.abs(Khat - K).max() < 0.05


class TestSpectralError:
    def test_trivial_cases(self):
        A = np.diag([3.0, 1.0])
        assert spectral_error(A, A) == 0.0
        assert spectral_error(A, np.eye(2)) == pytest.approx(2.0, rel=1e-12)

    def test_opposite_sign_eigenvalues(self):
        assert spectral_error(np.diag([2.0, -2.0, 0.5]), np.zeros((3, 3))) == pytest.approx(2.0)

    def test_against_dense_eigensolver(self, rng):
        for _ in range(5):
            A = rng.normal(size=(20, 20))
            B = rng.normal(size=(20, 20))
            A, B = A + A.T, B + B.T
            ref = np.abs(np.linalg.eigvalsh(A - B)).max()
            assert spectral_error(A, B) == pytest.approx(ref, rel=1e-6)

    def test_size_mismatch(self):
        with pytest.raises(DataError):
            spectral_error(np.eye(2), np.eye(3))

    @staticmethod
    def _medians(X, c, ms):
        K = exact_gaussian_kernel(X, c)
        return K, [np.median([spectral_error(approx_kernel(
            new_bernoulli_map(3, m, 0.05, c, s).embed_batch(X)), K) for s in range(20)])
            for m in ms]

    def test_median_error_decreases_with_m(self, small_normalized):
        _, medians = self._medians(small_normalized, 90.0, (50, 200, 800))
        assert medians[0] >= medians[1] >= medians[2]

    def test_narrow_width_error_plateaus_at_bias(self, small_normalized):
        # at the median-heuristic width the error is dominated by the bias of
        # the Bernoulli estimator, so it stops shrinking with m
        X = small_normalized
        c = median_heuristic(X)
        K, medians = self._medians(X, c, (200, 800))
        bias = spectral_error(bernoulli_kernel_expectation(X[:, None] - X[None], 0.05, c), K)
        for med in medians:
            assert abs(med - bias) < 0.1 * bias


class TestBound:
    def test_symbolic_oracle(self):
        n, m = sp.symbols("n m", positive=True)
        expr = (sp.sqrt(2) * n * (m + 1) * sp.log(n) / (m * (m - 1))
                + 4 * sp.sqrt(2) * n**2 * (m + 1) ** 2 / (m * (m - 1) ** 2)
                + sp.sqrt(6 * n**2 * sp.log(n) / m + 12 * n**3 * (m + 1) / (m * (m - 1))))
        for nv, mv in [(200, 4000), (100, 200), (2, 2), (1000, 150)]:
            ref = float(expr.subs({n: nv, m: mv}).evalf(30))
            assert spectral_error_bound(nv, mv) == pytest.approx(ref, rel=1e-13)
        # the bound vanishes as m grows, at rate 1/sqrt(m)
        assert sp.limit(expr.subs(n, 2), m, sp.oo) == 0
        rate = float(sp.limit(sp.sqrt(m) * expr.subs(n, 2), m, sp.oo))
        assert rate == pytest.approx(math.sqrt(24 * (math.log(2) + 4)))
        assert math.sqrt(1e12) * spectral_error_bound(2, 10**12) == pytest.approx(rate, rel=1e-4)

    def test_frozen_values(self):
        assert spectral_error_bound(200, 4000) == pytest.approx(212.98042835752663, rel=1e-14)
        assert spectral_error_bound(100, 200) == pytest.approx(540.81263462651641, rel=1e-14)

    def test_decreasing_in_m(self):
        grid = np.unique(np.logspace(2, 6, 60).astype(int))
        values = [spectral_error_bound(500, int(m)) for m in grid]
        assert all(a > b for a, b in zip(values, values[1:]))

    def test_rejects_small_m(self):
        with pytest.raises(ParameterError, match="m"):
            spectral_error_bound(10, 1)

    def test_dominates_empirical_error(self):
        X = np.random.default_rng(0).normal(size=(100, 3))
        c = median_heuristic(X)
        K = exact_gaussian_kernel(X, c)
        errs = [spectral_error(approx_kernel(new_bernoulli_map(3, 200, 0.05, c, s)
                                             .embed_batch(X)), K) for s in range(20)]
        assert np.median(errs) <= spectral_error_bound(100, 200)


class TestWidth:
    def test_median_heuristic_brute_force(self, rng):
        X = rng.normal(size=(15, 2))
        d2 = [np.sum((X[i] - X[j]) ** 2) for i in range(15) for j in range(i + 1, 15)]
        assert median_heuristic(X) == pytest.approx(np.median(d2), rel=1e-14)

    def test_resolve_width(self, rng):
        X = rng.normal(size=(40, 4))
        assert resolve_width("scaled-dimension", X) == 120.0
        assert resolve_width(2.5, X) == 2.5
        assert resolve_width("median-heuristic", X) == median_heuristic(X)
        with pytest.raises(ParameterError):
            resolve_width("silverman", X)
