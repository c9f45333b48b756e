import numpy as np
import pytest

from dlsslab.density import (
    bls_datum,
    cell_averages,
    continuous_entropy,
    continuous_fisher,
    density_from_values,
    hellinger,
    is_positive,
    project_initial,
    random_positive_density,
    reconstruct,
    reconstruct_many,
    uniform_datum,
)
from dlsslab.functionals import entropy, fisher
from dlsslab.grid import GridSpec

from oracles import quad_cell_average_midpoint


class TestDensityType:
    def test_rejects_negative_entries(self):
        with pytest.raises(ValueError, match="negative"):
            density_from_values(GridSpec(2), [-0.1, 2.1])

    def test_rejects_wrong_mass(self):
        with pytest.raises(ValueError, match="mass"):
            density_from_values(GridSpec(2), [1.0, 1.5])

    def test_positivity_predicate(self):
        g = GridSpec(2)
        assert is_positive(density_from_values(g, [1.0, 1.0]))
        assert not is_positive(density_from_values(g, [2.0, 0.0]))


class TestProjection:
    def test_uniform_projects_to_uniform(self):
        rho = project_initial(uniform_datum(), GridSpec(16))
        assert np.allclose(rho.values, 1.0, atol=1e-12)

    def test_mass_is_exact(self):
        for n in (4, 8, 32):
            rho = project_initial(bls_datum(2, 1e-3), GridSpec(n))
            assert abs(rho.mass - 1.0) <= 1e-12

    def test_output_strictly_positive_with_floor(self):
        g = GridSpec(8)
        rho = project_initial(bls_datum(8, 1e-3), g)
        assert is_positive(rho)
        assert rho.min_value >= g.delta / (1.0 + g.delta) * (1.0 - 1e-12)

    def test_bls_cell_averages_match_midpoint_oracle(self):
        datum = bls_datum(1, 1e-3)
        g = GridSpec(8)
        avg = cell_averages(datum, g)
        for k in range(g.n):
            a = (k - 0.5) * g.delta
            b = (k + 0.5) * g.delta
            ref = quad_cell_average_midpoint(datum.density, a, b)
            assert avg[k] == pytest.approx(ref, rel=1e-8)


class TestBlsDatum:
    def test_normalized(self):
        for m in (1, 2, 8, 16):
            assert bls_datum(m, 1e-3).integral() == pytest.approx(1.0, abs=1e-10)

    def test_normalization_against_trapezoid_oracle(self):
        m, eps = 1, 1e-3
        x = np.linspace(0.0, 1.0, 1_000_001)
        raw = (np.sqrt(eps) + (0.5 * (1.0 + np.cos(2.0 * np.pi * x))) ** m) ** 2
        z_ref = np.trapezoid(raw, x)
        datum = bls_datum(m, eps)
        # datum.density = raw / Z, so Z is recoverable from any evaluation point.
        z_mine = raw[0] / datum.density(np.array([0.0]))[0]
        assert z_mine == pytest.approx(z_ref, rel=1e-9)

    def test_large_m_limit_away_from_bump(self):
        eps = 1e-3
        datum = bls_datum(64, eps)
        # At x = 1/2 the bump term vanishes; the floor eps/Z remains.
        val = float(datum.density(np.array([0.5]))[0])
        z = 1.0 / val * eps
        assert val == pytest.approx(eps / z, rel=1e-12)
        assert val > 0.0

    def test_rejects_bad_parameters(self):
        with pytest.raises(ValueError):
            bls_datum(0, 1e-3)
        with pytest.raises(ValueError):
            bls_datum(1, 0.0)


class TestReconstruct:
    def test_uniform_everywhere_one(self):
        rho = project_initial(uniform_datum(), GridSpec(8))
        for x in (0.0, 0.1, 0.45, 0.99):
            assert reconstruct(rho, x) == pytest.approx(1.0, abs=1e-12)

    def test_cell_centers(self):
        g = GridSpec(4)
        rho = density_from_values(g, [0.4, 1.2, 1.6, 0.8])
        for k in range(4):
            assert reconstruct(rho, k * g.delta) == rho.values[k]

    def test_boundary_goes_right(self):
        g = GridSpec(4)
        rho = density_from_values(g, [0.4, 1.2, 1.6, 0.8])
        # x = (k + 1/2) delta is the boundary between cells k and k+1.
        assert reconstruct(rho, 0.125) == rho.values[1]
        assert reconstruct(rho, 0.875) == rho.values[0]

    def test_adjoint_identity_with_exact_integration(self):
        # <reconstruction(f), g>_L2 = <f, cell averages of g>_mesh for
        # piecewise-constant g on a finer grid; both sides computed exactly.
        gc = GridSpec(4)
        gf_ = GridSpec(8)
        rng = np.random.default_rng(3)
        f = rng.uniform(0.5, 2.0, gc.n)
        f = f / (gc.delta * np.sum(f))
        rho = density_from_values(gc, f)
        g = rng.uniform(-1.0, 1.0, gf_.n)
        xs = (np.arange(400_000) + 0.5) / 400_000
        lhs = float(np.mean(reconstruct_many(rho, xs) * g[np.floor(xs * gf_.n + 0.5).astype(int) % gf_.n]))
        ghat = np.array([
            quad_cell_average_midpoint(lambda x: g[np.floor(np.mod(x, 1.0) * gf_.n + 0.5).astype(int) % gf_.n],
                                       (k - 0.5) * gc.delta, (k + 0.5) * gc.delta, points=50_000)
            for k in range(gc.n)
        ])
        rhs = gc.delta * np.sum(f * ghat)
        assert lhs == pytest.approx(rhs, rel=1e-4)


class TestHellinger:
    def test_zero_on_equal(self):
        rho = random_positive_density(GridSpec(16), 0)
        assert hellinger(rho, rho) == 0.0

    def test_hand_case_n2(self):
        g = GridSpec(2)
        a = density_from_values(g, [2.0, 0.0])
        b = density_from_values(g, [0.0, 2.0])
        assert hellinger(a, b) == pytest.approx(np.sqrt(2.0), rel=1e-15)

    def test_triangle_inequality(self):
        g = GridSpec(12)
        for seed in range(20):
            a = random_positive_density(g, seed)
            b = random_positive_density(g, seed + 50)
            c = random_positive_density(g, seed + 100)
            assert hellinger(a, c) <= hellinger(a, b) + hellinger(b, c) + 1e-14

    def test_square_bounded_by_two(self):
        g = GridSpec(6)
        for seed in range(50):
            a = random_positive_density(g, seed, min_value=1e-6)
            b = random_positive_density(g, seed + 1000, min_value=1e-6)
            assert hellinger(a, b) ** 2 <= 2.0 + 1e-12


class TestRandomDensity:
    def test_seed_reproducible(self):
        g = GridSpec(32)
        a = random_positive_density(g, 7)
        b = random_positive_density(g, 7)
        assert np.array_equal(a.values, b.values)

    def test_unit_mass_and_floor(self):
        g = GridSpec(19)
        rho = random_positive_density(g, 3, min_value=0.05)
        assert abs(rho.mass - 1.0) <= 1e-12
        assert rho.min_value >= 0.05 - 1e-15

    def test_rejects_bad_floor(self):
        with pytest.raises(ValueError):
            random_positive_density(GridSpec(4), 0, min_value=1.5)


class TestProjectionBounds:
    def test_fisher_projection_bound(self):
        # Averaged Fisher information is at most eight times the continuous one.
        datum = bls_datum(2, 1e-3)
        f_cont = continuous_fisher(datum)
        for n in (4, 8, 16, 32, 64, 128):
            g = GridSpec(n)
            avg = cell_averages(datum, g)
            avg = avg / (g.delta * np.sum(avg))
            f_disc = fisher(density_from_values(g, avg))
            assert f_disc <= 8.0 * f_cont * (1.0 + 1e-9)

    def test_entropy_of_projection_bounded_by_continuous_entropy(self):
        datum = bls_datum(8, 1e-3)
        h_cont = continuous_entropy(datum)
        for n in (8, 16, 64):
            rho = project_initial(datum, GridSpec(n))
            assert entropy(rho) <= h_cont * (1.0 + 1e-9)

    def test_fisher_scaling_identity_of_lift(self):
        datum = bls_datum(2, 1e-3)
        g = GridSpec(16)
        avg = cell_averages(datum, g)
        avg = avg / (g.delta * np.sum(avg))
        lifted_unnormalized = avg + g.delta

        def fisher_raw(v):
            s = np.sqrt(v)
            return 2.0 * g.delta * np.sum(((np.roll(s, -1) - s) / g.delta) ** 2)

        lhs = fisher_raw(lifted_unnormalized / (1.0 + g.delta))
        rhs = fisher_raw(lifted_unnormalized) / (1.0 + g.delta)
        assert lhs == pytest.approx(rhs, rel=1e-13)
