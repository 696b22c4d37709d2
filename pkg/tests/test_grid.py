"""
Unit tests for the feeder model, AC power flow and its linearization.

Tests cover:
  1. Feeder validation rules
  2. Newton-Raphson power flow against a two-bus fixed point
  3. Power balance and non-convergence reporting
  4. Finite-difference sensitivities, intercepts and the sweep report
  5. PV capability polytope

Run:  python -m pytest tests/test_grid.py -v
"""
import sys
import os

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from markovgrid.errors import ConvergenceError, InputValidationError
from markovgrid.grid import (
    Branch,
    FeederModel,
    Injections,
    base_point,
    evaluate_linear,
    linearize,
    load_feeder,
    power_balance,
    pv_constraint_polytope,
    solve_power_flow,
    sweep_error,
)

DATA = os.path.join(os.path.dirname(__file__), "..", "markovgrid", "data")


@pytest.fixture(scope="module")
def feeder() -> FeederModel:
    return load_feeder(os.path.join(DATA, "feeder_12.json"))


@pytest.fixture(scope="module")
def loads(feeder) -> Injections:
    """35 kW at 0.3 kvar/kW on every non-substation node."""
    p = np.full(feeder.num_nodes, -feeder.to_pu(35.0))
    p[0] = 0.0
    return Injections(p, 0.3 * p)


# ═══════════════════════════════════════════════════════════════════════════
#  FEEDER
# ═══════════════════════════════════════════════════════════════════════════


class TestFeeder:
    def test_reference_feeder(self, feeder):
        assert feeder.num_nodes == 12
        assert [d.id for d in feeder.pv_devices] == ["pv_4", "pv_8", "pv_11"]
        assert [d.node for d in feeder.tcl_devices] == [5, 10]
        assert feeder.device("pv_8").rating == pytest.approx(0.3)
        assert feeder.depth().max() == 6

    def test_disconnected_nodes_rejected(self):
        branches = (Branch(1, 2, 0.01, 0.01), Branch(2, 3, 0.01, 0.01), Branch(3, 1, 0.01, 0.01))
        with pytest.raises(InputValidationError, match="not connected"):
            FeederModel(name="loop", base_kva=1000.0, num_nodes=4, branches=branches)

    def test_branch_count_checked(self):
        with pytest.raises(InputValidationError, match="needs 2 branches"):
            FeederModel(name="short", base_kva=1000.0, num_nodes=3, branches=(Branch(0, 1, 0.01, 0.01),))

    def test_zero_impedance_rejected(self):
        with pytest.raises(InputValidationError, match="zero impedance"):
            FeederModel.line(2, 0.0, 0.0)

    def test_unknown_device(self, feeder):
        with pytest.raises(InputValidationError):
            feeder.device("pv_99")


# ═══════════════════════════════════════════════════════════════════════════
#  POWER FLOW
# ═══════════════════════════════════════════════════════════════════════════


def _two_bus_fixed_point(z: complex, s_load: complex) -> complex:
    """V = 1 − z·conj(s_load / V), iterated from a flat start."""
    V = 1.0 + 0j
    for _ in range(500):
        V = 1.0 - z * np.conj(s_load / V)
    return V


class TestPowerFlow:
    def test_flat_profile_without_injections(self, feeder):
        solution = solve_power_flow(feeder, Injections.zeros(feeder.num_nodes))
        np.testing.assert_allclose(solution.v_mag, 1.0)
        assert solution.iterations == 0
        assert solution.p0 == pytest.approx(0.0, abs=1e-12)

    def test_two_bus_matches_fixed_point(self):
        z = complex(0.02, 0.04)
        s_load = complex(0.1, 0.03)
        line = FeederModel.line(2, z.real, z.imag)
        solution = solve_power_flow(line, Injections(np.array([0.0, -s_load.real]), np.array([0.0, -s_load.imag])))
        expected = _two_bus_fixed_point(z, s_load)
        assert solution.voltages[1] == pytest.approx(expected, abs=1e-8)
        assert solution.p0 == pytest.approx(s_load.real + solution.losses_p, abs=1e-9)

    def test_generation_raises_voltage(self):
        line = FeederModel.line(3, 0.02, 0.02)
        solution = solve_power_flow(line, Injections(np.array([0.0, 0.0, 0.2]), np.zeros(3)))
        assert solution.v_mag[2] > solution.v_mag[1] > 1.0
        assert solution.p0 < 0.0

    def test_power_balance(self, feeder, loads):
        injections, _, _ = base_point(feeder, loads, p_avail=np.full(3, 0.2))
        solution = solve_power_flow(feeder, injections)
        balance = power_balance(solution, injections)
        assert balance.losses_p > 0.0
        assert balance.residual == pytest.approx(0.0, abs=1e-7)

    def test_wrong_vector_length(self, feeder):
        with pytest.raises(InputValidationError):
            solve_power_flow(feeder, Injections.zeros(3))

    def test_non_convergence_reports_history(self):
        line = FeederModel.line(2, 1.0, 1.0)
        with pytest.raises(ConvergenceError) as exc:
            solve_power_flow(line, Injections(np.array([0.0, -10.0]), np.array([0.0, -10.0])), max_iter=15)
        assert exc.value.residual_history


# ═══════════════════════════════════════════════════════════════════════════
#  LINEARIZATION
# ═══════════════════════════════════════════════════════════════════════════


class TestLinearization:
    @pytest.fixture(scope="class")
    def setup(self, feeder, loads):
        base, pv_x, tcl_p = base_point(feeder, loads, p_avail=np.full(3, 0.2), tcl_fraction=[0.2, 0.3])
        sens = linearize(feeder, base, loads=[loads], base_loads=loads)
        return base, pv_x, tcl_p, sens

    def test_shapes(self, feeder, setup):
        _, _, _, sens = setup
        n = feeder.num_nodes
        assert sens.K_p.shape == (n - 1, n)
        assert sens.G.shape == (3, n - 1, 2)
        assert sens.g_tcl.shape == (2, n - 1)
        assert sens.num_steps == 1

    def test_signs(self, setup):
        _, _, _, sens = setup
        # generation at node 5 raises its own voltage and cuts the import
        assert sens.K_p[4, 5] > 0.0
        assert -1.1 < sens.k_p[5] < -0.9
        assert sens.k_p[0] == pytest.approx(-1.0, abs=1e-6)
        np.testing.assert_allclose(sens.K_p[:, 0], 0.0, atol=1e-9)

    def test_exact_at_base(self, feeder, setup):
        base, pv_x, tcl_p, sens = setup
        v, p0 = evaluate_linear(sens, pv_x, tcl_p, t=0)
        exact = solve_power_flow(feeder, base)
        np.testing.assert_allclose(v, exact.v_mag[1:], atol=1e-10)
        assert p0 == pytest.approx(exact.p0, abs=1e-10)

    def test_first_order_accuracy(self, feeder, setup):
        base, pv_x, tcl_p, sens = setup
        moved = pv_x.copy()
        moved[0, 0] += 0.01
        v, p0 = evaluate_linear(sens, moved, tcl_p, t=0)
        exact = solve_power_flow(feeder, base.with_added(4, 0.01, 0.0))
        np.testing.assert_allclose(v, exact.v_mag[1:], atol=1e-5)
        assert p0 == pytest.approx(exact.p0, abs=2e-5)

    def test_sweep_error_small(self, feeder, setup):
        base, _, _, sens = setup
        report = sweep_error(feeder, base, fraction=0.1, points=5, sens=sens)
        assert report.points == 5
        assert report.max_voltage_error <= 1e-3
        assert report.max_p0_error <= 1e-3

    def test_step_outside_horizon(self, setup):
        _, pv_x, tcl_p, sens = setup
        with pytest.raises(InputValidationError):
            evaluate_linear(sens, pv_x, tcl_p, t=1)

    def test_thread_count_does_not_change_result(self, feeder, setup):
        base, _, _, sens = setup
        serial = linearize(feeder, base, workers=1)
        np.testing.assert_array_equal(serial.K_p, sens.K_p)
        np.testing.assert_array_equal(serial.k_q, sens.k_q)


# ═══════════════════════════════════════════════════════════════════════════
#  PV POLYTOPE
# ═══════════════════════════════════════════════════════════════════════════


class TestPvPolytope:
    def test_vertices_and_bounds(self):
        poly = pv_constraint_polytope(0.3, 0.3, m=8)
        assert poly.A.shape == (10, 2)
        assert poly.contains(0.0, 0.0)
        assert poly.contains(0.3, 0.0, tol=1e-9)
        assert not poly.contains(0.31, 0.0)
        assert not poly.contains(-0.01, 0.0)

    def test_available_power_caps_p(self):
        poly = pv_constraint_polytope(0.3, 0.1, m=8)
        assert poly.contains(0.1, 0.2)
        assert not poly.contains(0.15, 0.0)

    def test_inscribed_in_disk(self):
        poly = pv_constraint_polytope(0.3, 0.3, m=12)
        points = np.random.default_rng(0).uniform(-0.35, 0.35, size=(4000, 2))
        inside = np.array([poly.contains(p, q) for p, q in points])
        assert inside.any()
        assert np.all(np.hypot(points[inside, 0], points[inside, 1]) <= 0.3 + 1e-12)

    def test_vertices_on_circle(self):
        poly = pv_constraint_polytope(0.3, 0.3, m=8)
        np.testing.assert_allclose(np.hypot(*poly.vertices().T), 0.3)

    def test_invalid_inputs(self):
        with pytest.raises(InputValidationError):
            pv_constraint_polytope(0.0, 0.1)
        with pytest.raises(InputValidationError):
            pv_constraint_polytope(0.3, 0.1, m=3)
        with pytest.raises(InputValidationError):
            pv_constraint_polytope(0.3, -0.1)
