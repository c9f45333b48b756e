import json
import math

import numpy as np
import pytest

from dlsslab.density import bls_datum, density_from_values, project_initial
from dlsslab.flow import SolverConfig, simulate
from dlsslab.grid import GridSpec
from dlsslab.inequalities import (
    LOG_SOBOLEV_CONSTANT,
    decay_suite,
    elementary_log_scan,
    ggs_duality_suite,
    gns_suite,
    interpolation_suite,
    lsi_suite,
    monster_scan,
    poincare_suite,
    short_time_decay_constant,
)


class TestScalarScans:
    def test_entropy_production_scan_equality_at_one(self):
        u = v = 1.0
        lhs = (u * v - 1.0) * math.log(u * v) + 0.5 * ((u - 1) ** 3 / (u + 1) + (v - 1) ** 3 / (v + 1))
        rhs = 0.25 * (u + v - 2.0) ** 2
        assert lhs - rhs == 0.0

    def test_entropy_production_spot_check(self):
        # u = v = 4 collapses to a one-variable inequality, checked by hand.
        u = v = 4.0
        lhs = 15.0 * math.log(16.0) + 27.0 / 5.0
        rhs = 9.0
        assert lhs > rhs
        scan_lhs = (u * v - 1) * math.log(u * v) + 0.5 * ((u - 1) ** 3 / (u + 1) + (v - 1) ** 3 / (v + 1))
        assert scan_lhs == pytest.approx(lhs, rel=1e-14)

    def test_full_scan_passes(self):
        rep = monster_scan()
        assert rep.passed
        assert rep.worst_margin >= -1e-12
        assert rep.samples == 1000 * 1000

    def test_elementary_scan_passes(self):
        rep = elementary_log_scan()
        assert rep.passed
        assert rep.worst_margin >= -1e-12

    def test_elementary_equality_at_one(self):
        u = v = 1.0
        lhs = (u - 1 / v) ** 2 + (v - 1 / u) ** 2
        assert lhs == 0.0 == 2.0 * math.log(u * v) ** 2


class TestPoincareSuite:
    def test_passes_across_grids(self):
        for n in (2, 3, 4, 8, 16, 64, 128):
            rep = poincare_suite(GridSpec(n), samples=100, seed=1)
            assert rep.passed, (n, rep.worst_margin, rep.notes)

    def test_constant_value_at_two_cells(self):
        rep = poincare_suite(GridSpec(2), samples=10, seed=0)
        assert rep.notes["constant"] == pytest.approx(1.0 / 16.0, rel=1e-14)

    def test_saturation_is_tight(self):
        rep = poincare_suite(GridSpec(32), samples=10, seed=0)
        assert rep.notes["saturation_gap"] <= 1e-10


class TestLogSobolevSuite:
    def test_passes_across_grids(self):
        for n in (2, 5, 16, 128):
            rep = lsi_suite(GridSpec(n), samples=150, seed=2)
            assert rep.passed, (n, rep.worst_margin)

    def test_constant_value(self):
        assert LOG_SOBOLEV_CONSTANT == pytest.approx(25.0 / (8.0 * math.pi**2), rel=1e-15)

    def test_uniform_density_margin_zero(self):
        from dlsslab.functionals import entropy, fisher

        rho = density_from_values(GridSpec(8), np.ones(8))
        assert entropy(rho) == 0.0
        assert fisher(rho) == 0.0


class TestGnsSuite:
    def test_p_two_is_identity(self):
        rep = gns_suite(GridSpec(16), 2.0, samples=50, seed=0)
        assert rep.passed
        assert rep.notes["theta"] == 0.0

    def test_passes_for_several_exponents(self):
        for p in (3.0, 4.0, 6.0):
            rep = gns_suite(GridSpec(32), p, samples=200, seed=3)
            assert rep.passed, (p, rep.worst_margin)

    def test_constant_function_degenerate_case(self):
        # For constant v all three norms coincide, so the bound is equality.
        g = GridSpec(8)
        d = g.delta
        v = np.full(8, 2.0)
        lp = (d * np.sum(np.abs(v) ** 4)) ** 0.25
        l2 = math.sqrt(d * np.sum(v * v))
        assert lp == pytest.approx(l2, rel=1e-14)

    def test_rejects_p_below_two(self):
        with pytest.raises(ValueError):
            gns_suite(GridSpec(4), 1.5)


class TestInterpolationSuite:
    def test_passes_across_grids(self):
        for n in (2, 4, 32, 128):
            rep = interpolation_suite(GridSpec(n), samples=150, seed=4)
            assert rep.passed, (n, rep.worst_margin)


class TestDecaySuite:
    def test_uniform_trajectory_trivially_passes(self):
        traj = simulate(density_from_values(GridSpec(8), np.ones(8)), SolverConfig())
        rep = decay_suite(traj)
        assert rep.passed

    def test_bls_run_passes_with_margin(self):
        rho0 = project_initial(bls_datum(2, 1e-3), GridSpec(64))
        traj = simulate(rho0, SolverConfig(t_max=50.0))
        rep = decay_suite(traj)
        assert rep.passed
        assert rep.worst_margin >= 0.0

    def test_short_time_constant_formula(self):
        g = GridSpec(64)
        from dlsslab.grid import poincare_constant

        r = 3.0
        expected = r / (4.0 * poincare_constant(g) * (r + 1.0) ** (r + 1.0))
        assert short_time_decay_constant(g, r) == pytest.approx(expected, rel=1e-15)


class TestGgsDualitySuite:
    def test_duality_holds_and_deficit_flagged(self):
        g = GridSpec(16)
        rep = ggs_duality_suite(g, samples=10, seed=0)
        assert rep.passed
        assert rep.notes["printed_eta_sum_deficit_factor"] == pytest.approx(4.0 / g.delta**4, rel=1e-12)


class TestReportSerialization:
    def test_reports_are_json_ready(self):
        rep = poincare_suite(GridSpec(8), samples=20, seed=0)
        payload = json.dumps(rep.to_dict())
        back = json.loads(payload)
        assert back["name"] == "poincare"
        assert back["passed"] is True
        assert "worst_case" in back
