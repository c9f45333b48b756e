import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dlsslab.grid import (
    GridFunction,
    GridSpec,
    NonZeroMean,
    backward_diff,
    forward_diff,
    forward_diff_values,
    h1_norm,
    inner_delta,
    inv_laplacian,
    laplacian,
    laplacian_matrix,
    laplacian_values,
    lp_norm,
    poincare_constant,
    w2inf_dual_norm,
)

from oracles import dual_norm_lp


def gf(n, values):
    return GridFunction(GridSpec(n), values)


def random_gf(n, seed, zero_mean=False):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=n)
    if zero_mean:
        v -= np.mean(v)
    return gf(n, v)


class TestGridSpec:
    def test_delta_times_n_is_one(self):
        for n in (2, 3, 7, 64, 1000):
            g = GridSpec(n)
            assert abs(g.delta * g.n - 1.0) <= 1e-15

    def test_rejects_tiny_grids(self):
        with pytest.raises(ValueError):
            GridSpec(1)

    def test_gridfunction_requires_matching_length(self):
        with pytest.raises(ValueError):
            GridFunction(GridSpec(4), [1.0, 2.0])

    def test_gridfunction_requires_finite_values(self):
        with pytest.raises(ValueError):
            GridFunction(GridSpec(2), [1.0, np.inf])

    def test_values_frozen(self):
        f = gf(4, [1.0, 2.0, 3.0, 4.0])
        with pytest.raises(ValueError):
            f.values[0] = 5.0


class TestDifferences:
    def test_laplacian_kills_constants(self):
        f = gf(8, np.full(8, 3.7))
        assert np.all(laplacian(f).values == 0.0)

    def test_laplacian_hand_case_n4(self):
        f = gf(4, [1.0, 0.0, 0.0, 0.0])
        assert np.allclose(laplacian(f).values, [-32.0, 16.0, 0.0, 16.0], rtol=0, atol=0)

    def test_laplacian_factorizes_through_one_sided_differences(self):
        f = random_gf(9, 1)
        a = forward_diff(backward_diff(f)).values
        b = backward_diff(forward_diff(f)).values
        c = laplacian(f).values
        assert np.allclose(a, c, rtol=1e-12, atol=1e-8)
        assert np.allclose(b, c, rtol=1e-12, atol=1e-8)

    def test_laplacian_output_sums_to_zero(self):
        f = random_gf(17, 2)
        assert abs(np.sum(laplacian(f).values)) <= 1e-9 * np.max(np.abs(laplacian(f).values))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 24), st.integers(0, 10_000))
    def test_laplacian_is_self_adjoint(self, n, seed):
        rng = np.random.default_rng(seed)
        f = gf(n, rng.uniform(-5, 5, n))
        g = gf(n, rng.uniform(-5, 5, n))
        lhs = inner_delta(laplacian(f), g)
        rhs = inner_delta(f, laplacian(g))
        assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


class TestInverseLaplacian:
    def test_zero_maps_to_zero(self):
        f = gf(6, np.zeros(6))
        assert np.all(inv_laplacian(f).values == 0.0)

    def test_inverse_property(self):
        for n in (2, 3, 4, 5, 16, 50):
            g = random_gf(n, n, zero_mean=True)
            w = inv_laplacian(laplacian(g))
            expected = g.values - np.mean(g.values)
            assert np.max(np.abs(w.values - expected)) <= 1e-10

    def test_hand_case_n4(self):
        w = inv_laplacian(gf(4, [-32.0, 16.0, 0.0, 16.0]))
        assert np.allclose(w.values, [0.75, -0.25, -0.25, -0.25], atol=1e-13)

    def test_residual_small(self):
        for n in (7, 33, 128):
            f = random_gf(n, n + 1, zero_mean=True)
            w = inv_laplacian(f)
            resid = laplacian(w).values - f.values
            assert np.max(np.abs(resid)) <= 1e-10

    def test_rejects_nonzero_mean(self):
        with pytest.raises(NonZeroMean):
            inv_laplacian(gf(4, [1.0, 1.0, 1.0, 1.0]))

    def test_matches_dense_least_squares(self):
        for n in (5, 9, 16):
            f = random_gf(n, 3 * n, zero_mean=True)
            a = laplacian_matrix(n, 1.0 / n)
            w_dense, *_ = np.linalg.lstsq(a, f.values, rcond=None)
            w_dense -= np.mean(w_dense)
            assert np.max(np.abs(inv_laplacian(f).values - w_dense)) <= 1e-9


class TestInnerProductsAndNorms:
    def test_inner_of_ones_is_one(self):
        f = gf(13, np.ones(13))
        assert inner_delta(f, f) == pytest.approx(1.0, abs=1e-15)

    def test_inner_hand_case_n2(self):
        assert inner_delta(gf(2, [1, 2]), gf(2, [3, 4])) == pytest.approx(5.5, abs=1e-15)

    def test_inner_nonnegative_on_diagonal(self):
        f = random_gf(11, 4)
        assert inner_delta(f, f) >= 0.0

    def test_lp_norm_of_ones(self):
        f = gf(9, np.ones(9))
        for p in (1.0, 2.0, 3.5, 7.0):
            assert lp_norm(f, p) == pytest.approx(1.0, rel=1e-14)

    def test_h1_of_constant(self):
        f = gf(6, np.full(6, -2.5))
        assert h1_norm(f) == pytest.approx(2.5, rel=1e-14)

    def test_norm_hand_case_n2(self):
        f = gf(2, [0.0, 2.0])
        assert lp_norm(f, 2.0) == pytest.approx(np.sqrt(2.0), rel=1e-14)
        assert np.allclose(forward_diff(f).values, [4.0, -4.0])
        assert h1_norm(f) == pytest.approx(np.sqrt(18.0), rel=1e-14)

    def test_lp_requires_p_at_least_one(self):
        with pytest.raises(ValueError):
            lp_norm(gf(2, [1.0, 1.0]), 0.5)


class TestDualNorm:
    def test_zero_function(self):
        assert w2inf_dual_norm(gf(8, np.zeros(8))) == 0.0

    def test_positive_homogeneity(self):
        f = random_gf(10, 5, zero_mean=True)
        one = w2inf_dual_norm(f)
        two = w2inf_dual_norm(gf(10, 2.0 * f.values))
        assert two == pytest.approx(2.0 * one, rel=1e-12)

    def test_matches_lp_oracle(self):
        for n in (2, 3, 4, 6, 8):
            for seed in range(4):
                f = random_gf(n, 100 * n + seed, zero_mean=True)
                mine = w2inf_dual_norm(f)
                ref = dual_norm_lp(f.values, f.grid.delta)
                assert mine == pytest.approx(ref, rel=1e-8, abs=1e-12)

    def test_rejects_nonzero_mean(self):
        with pytest.raises(NonZeroMean):
            w2inf_dual_norm(gf(4, np.ones(4)))

    def test_strictly_positive_for_nonzero(self):
        f = random_gf(12, 6, zero_mean=True)
        assert w2inf_dual_norm(f) > 0.0


class TestFunctionalInequalitiesOnGrid:
    def test_interpolation_estimate(self):
        rng = np.random.default_rng(0)
        for n in (4, 8, 32):
            d = 1.0 / n
            for _ in range(50):
                v = rng.normal(size=n)
                w = rng.normal(size=n)
                lhs = d * np.sum(forward_diff_values(v, d) * forward_diff_values(w, d))
                rhs = np.sqrt(d * np.sum(laplacian_values(v, d) ** 2)) * np.sqrt(d * np.sum(w * w))
                assert lhs <= rhs + 1e-10 * max(1.0, rhs)

    def test_poincare_constant_n2_is_one_sixteenth(self):
        assert poincare_constant(GridSpec(2)) == pytest.approx(1.0 / 16.0, rel=1e-15)

    def test_poincare_saturated_by_lowest_mode(self):
        for n in (2, 5, 16, 128):
            g = GridSpec(n)
            d = g.delta
            f = np.cos(2.0 * np.pi * d * np.arange(n))
            f -= np.mean(f)
            lhs = d * np.sum(f * f)
            rhs = poincare_constant(g) * d * np.sum(forward_diff_values(f, d) ** 2)
            assert abs(lhs - rhs) <= 1e-10 * lhs

    def test_poincare_random(self):
        rng = np.random.default_rng(9)
        for n in (2, 3, 17, 64):
            g = GridSpec(n)
            d = g.delta
            for _ in range(50):
                f = rng.normal(size=n)
                f -= np.mean(f)
                lhs = d * np.sum(f * f)
                rhs = poincare_constant(g) * d * np.sum(forward_diff_values(f, d) ** 2)
                assert lhs <= rhs * (1.0 + 1e-12)
