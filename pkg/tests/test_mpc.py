"""
Tests for the multi-period OPF and the closed-loop receding-horizon runner.

Tests cover:
  1. Scenario loading and forecasts
  2. Horizon QP assembly: guards and closed-form optima
  3. Single planning step: feasibility, setpoints, controls, predictions
  4. Uncontrolled populations follow the natural chain
  5. Short closed-loop runs, determinism and the no-TCL baseline
  6. The bundled scenario at full chain resolution and over the whole run

Run:  python -m pytest tests/test_mpc.py -v
      python -m pytest tests/test_mpc.py -v -m slow      (full two-hour cloud-dip comparison)
"""
import sys
import os
from dataclasses import replace

import numpy as np
import pandas as pd
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from markovgrid.errors import InfeasibleError, InputValidationError
from markovgrid.grid import base_point, linearize
from markovgrid.ingestion import load_scenario
from markovgrid.mdp import StateDistribution
from markovgrid.mpc import Forecast, OpfConfig, Population, assemble, plan_once, run, stratified_states
from markovgrid.tcl import build_grid, build_natural_chain, initial_distribution

DATA = os.path.join(os.path.dirname(__file__), "..", "markovgrid", "data")
CLOUD_DIP = os.path.join(DATA, "cloud_dip")
DIP_START_S, DIP_END_S = 1200.0, 1800.0


@pytest.fixture
def scenario(coarse_scenario_path):
    return load_scenario(coarse_scenario_path)


def _populations(scenario, controllable: bool = True) -> list[Population]:
    pops = []
    for doc in scenario.doc.populations:
        chain = build_natural_chain(scenario.params, build_grid(scenario.params, doc.dx), scenario.dt_seconds)
        pops.append(Population(scenario.feeder.device(doc.device), chain, initial_distribution(chain, doc.initial),
                               controllable))
    return pops


def _plan(scenario, controllable: bool = True, k: int = 0):
    config = scenario.config
    pops = _populations(scenario, controllable)
    forecast, loads = scenario.forecast(k, config.horizon)
    fractions = [float(p.rho0.values @ p.chain.power_weights) for p in pops]
    base, _, _ = base_point(scenario.feeder, loads[0], forecast.p_avail[0], tcl_fraction=fractions)
    sens = linearize(scenario.feeder, base, loads=loads, base_loads=loads[0])
    return plan_once(config, pops, scenario.feeder.pv_devices, sens, forecast, k), pops, forecast, sens


def _window(forecast: Forecast, steps: int) -> Forecast:
    return Forecast(p_avail=forecast.p_avail[:steps], reference=forecast.reference[:steps])


def _p0_linear(sens, pv_devices, setpoints: np.ndarray, t: int) -> float:
    nodes = [d.node for d in pv_devices]
    return float(sens.b_bar[t] + sens.k_p[nodes] @ setpoints[:, 0] + sens.k_q[nodes] @ setpoints[:, 1])


# ═══════════════════════════════════════════════════════════════════════════
#  SCENARIO
# ═══════════════════════════════════════════════════════════════════════════


class TestScenario:
    def test_cloud_dip_series(self):
        scenario = load_scenario(os.path.join(CLOUD_DIP, "scenario.json"))
        assert scenario.steps == 360
        assert scenario.config.horizon == 20
        assert scenario.load_p.shape == (360 + 20 + 1, 12)
        # generation positive, loads negative
        assert np.all(scenario.load_p[:, 1:] < 0)
        np.testing.assert_allclose(scenario.p_avail[0], 0.2)
        np.testing.assert_allclose(scenario.p_avail[60], 0.1)      # t = 1200 s
        np.testing.assert_allclose(scenario.p_avail[90], 0.2)      # t = 1800 s
        np.testing.assert_allclose(scenario.p_avail[-1], 0.2)
        np.testing.assert_allclose(scenario.reference, 0.39)
        assert scenario.doc.meta["dip_start_s"] == DIP_START_S

    def test_horizon_override(self, coarse_scenario_path):
        scenario = load_scenario(coarse_scenario_path, horizon=5)
        assert scenario.config.horizon == 5

    def test_persistence_forecast_repeats_observation(self):
        scenario = load_scenario(os.path.join(CLOUD_DIP, "scenario.json"))
        forecast, loads = scenario.forecast(58, 5, "persistence")
        np.testing.assert_allclose(forecast.p_avail, np.full((5, 3), 0.2))
        perfect, _ = scenario.forecast(58, 5, "perfect")
        np.testing.assert_allclose(perfect.p_avail[-1], 0.1)
        assert len(loads) == 5

    def test_last_step_sees_a_full_horizon(self):
        scenario = load_scenario(os.path.join(CLOUD_DIP, "scenario.json"))
        forecast, loads = scenario.forecast(scenario.steps - 1, scenario.config.horizon)
        assert forecast.steps == scenario.config.horizon
        assert len(loads) == scenario.config.horizon

    def test_forecast_beyond_data(self, scenario):
        with pytest.raises(InputValidationError):
            scenario.forecast(scenario.steps + 5, scenario.config.horizon)

    def test_bad_config_rejected(self):
        with pytest.raises(InputValidationError):
            OpfConfig(horizon=0)
        with pytest.raises(InputValidationError):
            OpfConfig(forecast_mode="oracle")
        with pytest.raises(InputValidationError):
            OpfConfig(mass_floor=-1.0)

    def test_stratified_states(self):
        np.testing.assert_array_equal(stratified_states(StateDistribution(np.array([0.5, 0.5])), 4), [0, 0, 1, 1])
        np.testing.assert_array_equal(stratified_states(StateDistribution(np.array([1.0, 0.0])), 3), [0, 0, 0])


# ═══════════════════════════════════════════════════════════════════════════
#  ASSEMBLY
# ═══════════════════════════════════════════════════════════════════════════


class TestAssembly:
    def test_short_forecast_rejected(self, scenario):
        _, pops, forecast, sens = _plan(scenario)
        short = _window(forecast, 1)
        with pytest.raises(InputValidationError, match="Forecast covers"):
            assemble(scenario.config, pops, sens, scenario.feeder.pv_devices, short)

    def test_chain_step_must_match(self, scenario):
        _, pops, forecast, sens = _plan(scenario)
        config = replace(scenario.config, dt_seconds=40.0)
        with pytest.raises(InfeasibleError):
            assemble(config, pops, sens, scenario.feeder.pv_devices, forecast)

    def test_uncontrolled_population_has_no_switch_variables(self, scenario):
        controlled, _, _, _ = _plan(scenario, controllable=True)
        uncontrolled, _, _, _ = _plan(scenario, controllable=False)
        assert uncontrolled.problem.program.n < controlled.problem.program.n
        assert all(np.all(index < 0) for index in uncontrolled.problem.switch_index)

    def test_unreachable_columns_carry_no_switch_joint(self, scenario):
        _, pops, forecast, sens = _plan(scenario)
        chain = pops[0].chain
        values = np.zeros(chain.N)
        values[chain.controllable_columns[0]] = 1.0
        lone = replace(pops[0], rho0=StateDistribution(values))
        config = replace(scenario.config, horizon=1)
        problem = assemble(config, [lone], sens, scenario.feeder.pv_devices, _window(forecast, 1))
        np.testing.assert_array_equal(problem.switch_index[0][0] >= 0,
                                      np.arange(chain.controllable_columns.size) == 0)

    def test_no_curtailment_when_nothing_binds(self, scenario):
        """Without populations, voltage or tracking sensitivity the PV runs at its forecast."""
        _, _, forecast, sens = _plan(scenario)
        flat = replace(
            sens,
            K_p=np.zeros_like(sens.K_p), K_q=np.zeros_like(sens.K_q),
            k_p=np.zeros_like(sens.k_p), k_q=np.zeros_like(sens.k_q),
            a_bar=np.ones_like(sens.a_bar), b_bar=forecast.reference[: sens.num_steps].copy(),
        )
        plan = plan_once(scenario.config, [], scenario.feeder.pv_devices, flat, forecast)
        setpoints = plan.problem.pv_setpoints(plan.solution.x)
        np.testing.assert_allclose(setpoints[..., 0], forecast.p_avail, atol=1e-6)
        np.testing.assert_allclose(setpoints[..., 1], 0.0, atol=1e-6)
        assert plan.slack.max() < 1e-7

    def test_slack_equals_deficit_when_reference_unreachable(self, scenario):
        _, _, forecast, sens = _plan(scenario)
        # an export far beyond what the PV can deliver
        far = Forecast(p_avail=forecast.p_avail, reference=np.full(forecast.steps, -5.0))
        plan = plan_once(scenario.config, [], scenario.feeder.pv_devices, sens, far)
        setpoints = plan.problem.pv_setpoints(plan.solution.x)
        np.testing.assert_allclose(setpoints[..., 0], forecast.p_avail, atol=1e-6)
        for t in range(scenario.config.horizon):
            deficit = _p0_linear(sens, scenario.feeder.pv_devices, setpoints[t], t) - far.reference[t]
            assert deficit > 0.5
            assert plan.slack[t] == pytest.approx(deficit, abs=1e-6)

    def test_all_on_population_is_switched_down(self, scenario):
        _, pops, forecast, sens = _plan(scenario)
        pop = pops[0]
        chain = pop.chain
        values = np.zeros(chain.N)
        values[chain.on_columns] = 1.0 / chain.on_columns.size
        all_on = replace(pop, rho0=StateDistribution(values))
        config = replace(scenario.config, v_min=0.5, v_max=1.5)
        zero_ref = Forecast(p_avail=forecast.p_avail, reference=np.zeros(forecast.steps))
        plan = plan_once(config, [all_on], scenario.feeder.pv_devices, sens, zero_ref)
        on_mass = plan.predicted_rho[0] @ chain.power_weights
        assert on_mass[0] == pytest.approx(1.0)
        assert plan.controls[0].max() > 0.5
        assert on_mass[1] < on_mass[0] - 0.5
        assert np.all(on_mass[1:] <= on_mass[0] + 1e-9)


# ═══════════════════════════════════════════════════════════════════════════
#  PLANNING STEP
# ═══════════════════════════════════════════════════════════════════════════


class TestPlanOnce:
    @pytest.fixture
    def planned(self, scenario):
        return _plan(scenario)

    def test_solves_and_certifies(self, planned):
        plan, _, _, _ = planned
        assert plan.status.value == "optimal"
        assert plan.kkt.passed

    def test_pv_setpoints_respect_capability(self, scenario, planned):
        plan, _, forecast, _ = planned
        for k, dev in enumerate(scenario.feeder.pv_devices):
            p, q = plan.pv_setpoints[k]
            assert -1e-7 <= p <= forecast.p_avail[0, k] + 1e-7
            assert np.hypot(p, q) <= dev.rating + 1e-7

    def test_reference_is_tracked_before_the_dip(self, scenario, planned):
        plan, _, _, _ = planned
        # curtailing PV alone can lift the import to the reference
        assert plan.slack.max() * scenario.feeder.base_kva < 1.0
        assert np.all(plan.slack >= -1e-9)

    def test_feasible_plan_needs_no_slack(self, planned):
        plan, _, _, _ = planned
        assert plan.slack.sum() <= 1e-5

    def test_controls_are_probabilities(self, planned):
        plan, pops, _, _ = planned
        for u, pop in zip(plan.controls, pops):
            assert u.shape == (pop.chain.controllable_columns.size,)
            assert np.all((u >= 0.0) & (u <= 1.0))

    def test_predicted_distributions(self, scenario, planned):
        plan, pops, _, _ = planned
        for rho, pop in zip(plan.predicted_rho, pops):
            assert rho.shape == (scenario.config.horizon + 1, pop.chain.N)
            np.testing.assert_allclose(rho.sum(axis=1), 1.0, atol=1e-6)
            assert rho.min() >= -1e-7
            np.testing.assert_allclose(rho[0], pop.rho0.values, atol=1e-12)

    def test_joints_reproduce_the_distributions(self, planned):
        plan, pops, _, _ = planned
        for k, pop in enumerate(pops):
            joints = plan.problem.joints(plan.solution.x, k)
            rho = plan.predicted_rho[k]
            assert joints.min() >= -1e-7
            np.testing.assert_allclose(joints.sum(axis=1), rho[:-1], atol=1e-7)
            np.testing.assert_allclose(joints.sum(axis=2), rho[1:], atol=1e-6)

    def test_same_state_same_plan(self, scenario):
        a, _, _, _ = _plan(scenario)
        b, _, _, _ = _plan(scenario)
        np.testing.assert_array_equal(a.pv_setpoints, b.pv_setpoints)

    def test_uncontrolled_follows_natural_chain(self, scenario):
        plan, pops, _, _ = _plan(scenario, controllable=False)
        for u, rho, pop in zip(plan.controls, plan.predicted_rho, pops):
            assert np.all(u == 0.0)
            for t in range(scenario.config.horizon):
                np.testing.assert_allclose(rho[t + 1], pop.chain.natural.entries @ rho[t], atol=1e-6)

    def test_zero_flexibility_matches_uncontrolled_dispatch(self, scenario):
        """With every agent outside the switchable bins the population only follows Π_nat."""
        _, pops, forecast, sens = _plan(scenario)
        chain = pops[0].chain
        outside = np.setdiff1d(np.arange(chain.N), chain.controllable_columns)
        values = np.zeros(chain.N)
        values[outside] = 1.0 / outside.size
        rho0 = StateDistribution(values)
        config = replace(scenario.config, horizon=1)
        one = _window(forecast, 1)
        flexible = plan_once(config, [replace(p, rho0=rho0) for p in pops], scenario.feeder.pv_devices, sens, one)
        fixed = plan_once(config, [replace(p, rho0=rho0, controllable=False) for p in pops],
                          scenario.feeder.pv_devices, sens, one)
        for u in flexible.controls:
            np.testing.assert_array_equal(u, 0.0)
        np.testing.assert_allclose(flexible.pv_setpoints, fixed.pv_setpoints, atol=1e-6)

    def test_first_step_independent_of_horizon(self, scenario):
        """Constant data and no populations: the problem separates over time."""
        _, _, forecast, sens = _plan(scenario)
        assert np.allclose(forecast.p_avail[0], forecast.p_avail[1])
        short = plan_once(replace(scenario.config, horizon=1), [], scenario.feeder.pv_devices, sens,
                          _window(forecast, 1))
        longer = plan_once(replace(scenario.config, horizon=2), [], scenario.feeder.pv_devices, sens,
                           _window(forecast, 2))
        np.testing.assert_allclose(short.pv_setpoints, longer.pv_setpoints, atol=1e-6)

    def test_more_rated_power_never_costs_more(self, scenario):
        _, pops, forecast, sens = _plan(scenario)
        objectives = []
        for factor in (0.8, 0.9, 1.0, 1.1, 1.2):
            scaled = [replace(p, device=replace(p.device, p_max=p.device.p_max * factor)) for p in pops]
            plan = plan_once(scenario.config, scaled, scenario.feeder.pv_devices, sens, forecast)
            objectives.append(plan.objective)
        for smaller, larger in zip(objectives, objectives[1:]):
            assert larger <= smaller + 1e-7 * (1.0 + abs(smaller))


# ═══════════════════════════════════════════════════════════════════════════
#  CLOSED LOOP
# ═══════════════════════════════════════════════════════════════════════════


class TestRun:
    def test_short_run_records(self, scenario):
        result = run(scenario, seed=0, steps=3)
        assert result.completed_steps == 3
        assert result.failed_step is None
        frames = result.frames()
        assert list(frames["substation"]["step"]) == [1, 2, 3]
        assert len(frames["voltages"]) == 3 * (scenario.feeder.num_nodes - 1)
        assert set(frames["tcl"]["population"]) == {"tcl_5", "tcl_10"}
        assert set(frames["solver"]["status"]) == {"optimal"}
        assert set(result.timings) == {"linearize_s", "solve_s", "simulate_s"}

    def test_summary_fields(self, scenario):
        result = run(scenario, seed=0, steps=2)
        summary = result.summary(scenario.doc.tracking_tolerance_kw, scenario.config.v_min, scenario.config.v_max)
        assert summary["steps"] == 2
        assert summary["total_eps_kw"] >= 0.0
        assert summary["slack_violations"] == 0
        assert summary["max_voltage_band_excess_pu"] == 0.0
        assert summary["max_linear_voltage_band_excess_pu"] == 0.0
        assert summary["mean_rho_error_l1"] >= 0.0
        assert len(summary["objective"]) == 2
        assert result.slack_free_fraction(scenario.doc.tracking_tolerance_kw) == 1.0

    def test_linear_model_close_to_power_flow(self, scenario):
        frames = run(scenario, seed=0, steps=2).frames()
        volt = frames["voltages"]
        assert (volt["v_linear_pu"] - volt["v_nonlinear_pu"]).abs().max() < 5e-3

    def test_same_seed_same_records(self, scenario):
        a = run(scenario, seed=7, steps=3).frames()
        b = run(scenario, seed=7, steps=3).frames()
        for name in ("substation", "voltages", "tcl"):
            pd.testing.assert_frame_equal(a[name], b[name])

    def test_baseline_keeps_populations_uncontrolled(self, scenario):
        result = run(scenario, seed=0, with_tcl=False, steps=2)
        assert result.with_tcl is False
        assert result.completed_steps == 2
        assert set(result.frames()["tcl"]["population"]) == {"tcl_5", "tcl_10"}

    def test_estimation_error_shrinks_with_population_size(self, coarse_scenario_factory):
        errors = {}
        for agents in (20, 2000):
            scenario = load_scenario(coarse_scenario_factory(agents=agents, steps=5))
            errors[agents] = run(scenario, seed=3).rho_error()
        assert errors[2000] < errors[20]


# ═══════════════════════════════════════════════════════════════════════════
#  BUNDLED SCENARIO
# ═══════════════════════════════════════════════════════════════════════════


@pytest.fixture(scope="module")
def cloud_dip():
    return load_scenario(os.path.join(CLOUD_DIP, "scenario.json"))


class TestCloudDipResolution:
    """The shipped 0.1 °C chains with the shipped 20-step horizon."""

    @pytest.mark.parametrize("k", [0, 45, 59])
    def test_horizon_problem_certifies(self, cloud_dip, k):
        plan, pops, _, _ = _plan(cloud_dip, k=k)
        assert plan.status.value == "optimal"
        assert plan.kkt.passed
        assert pops[0].chain.N == 40
        assert plan.first_slack * cloud_dip.feeder.base_kva <= cloud_dip.doc.tracking_tolerance_kw

    def test_closed_loop_first_steps(self, cloud_dip):
        result = run(cloud_dip, seed=0, steps=3)
        assert result.failed_step is None
        assert set(result.frames()["solver"]["status"]) == {"optimal"}


@pytest.fixture(scope="module")
def cloud_dip_runs(cloud_dip):
    return {
        "tcl": run(cloud_dip, seed=0, with_tcl=True),
        "baseline": run(cloud_dip, seed=0, with_tcl=False),
    }


@pytest.mark.slow
class TestCloudDipRun:
    def test_runs_complete(self, cloud_dip, cloud_dip_runs):
        for result in cloud_dip_runs.values():
            assert result.failed_step is None
            assert result.completed_steps == cloud_dip.steps

    def test_tcl_hold_the_reference_through_the_dip(self, cloud_dip, cloud_dip_runs):
        tol = cloud_dip.doc.tracking_tolerance_kw
        assert cloud_dip_runs["tcl"].slack_free_fraction(tol, DIP_START_S, DIP_END_S) >= 0.95
        assert cloud_dip_runs["baseline"].slack_free_fraction(tol, DIP_START_S, DIP_END_S) < 0.5

    def test_reference_held_outside_the_dip(self, cloud_dip, cloud_dip_runs):
        tol = cloud_dip.doc.tracking_tolerance_kw
        assert cloud_dip_runs["tcl"].slack_free_fraction(tol, end_s=DIP_START_S) == 1.0
        assert cloud_dip_runs["tcl"].slack_free_fraction(tol, start_s=DIP_END_S + 600.0) == 1.0

    def test_voltages_stay_in_band(self, cloud_dip, cloud_dip_runs):
        config = cloud_dip.config
        for result in cloud_dip_runs.values():
            volt = result.frames()["voltages"]
            assert volt["v_linear_pu"].between(config.v_min, config.v_max).all()
            assert volt["v_nonlinear_pu"].between(config.v_min - 0.005, config.v_max + 0.005).all()

    def test_tcl_reduce_curtailment(self, cloud_dip_runs):
        curtailed = {name: result.frames()["substation"]["curtailment_kw"].sum()
                     for name, result in cloud_dip_runs.items()}
        assert curtailed["tcl"] < curtailed["baseline"]

    def test_nonlinear_offset_is_recorded(self, cloud_dip, cloud_dip_runs):
        summary = cloud_dip_runs["tcl"].summary(cloud_dip.doc.tracking_tolerance_kw,
                                                cloud_dip.config.v_min, cloud_dip.config.v_max)
        assert np.isfinite(summary["mean_linear_offset_kw"])
        assert summary["slack_violations"] <= 0.05 * cloud_dip.steps
