"""
Closed-loop receding-horizon simulation.

Each step k: poll the agents and estimate ρ̂, re-linearize around the
forecast for k+1, plan, apply the first-step PV setpoints and switch
probabilities, sample one agent transition, then evaluate the grid at the
realized injections with both the linear model and the full power flow.

With ``with_tcl=False`` the populations stay on the feeder as uncontrolled
load following Π_nat, which is the baseline the controlled run is compared to.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Optional

import numpy as np
import pandas as pd

from ..errors import MarkovgridError
from ..grid import base_point, evaluate_linear, injections_for, linearize, solve_power_flow
from ..mdp.core import StateDistribution
from ..solver import dump_program
from ..tcl import build_grid, build_natural_chain, estimate_distribution, initial_distribution, step_agents
from .controller import MpcState, step
from .problem import OpfConfig, Population

if TYPE_CHECKING:
    from ..ingestion.scenario import Scenario

logger = logging.getLogger(__name__)


@dataclass
class RunResult:
    scenario: str
    seed: int
    with_tcl: bool
    substation: list[dict] = field(default_factory=list)
    voltages: list[dict] = field(default_factory=list)
    tcl: list[dict] = field(default_factory=list)
    solver: list[dict] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)
    failed_step: Optional[int] = None

    @property
    def completed_steps(self) -> int:
        return len(self.substation)

    def frames(self) -> dict[str, pd.DataFrame]:
        return {
            "substation": pd.DataFrame(self.substation),
            "voltages": pd.DataFrame(self.voltages),
            "tcl": pd.DataFrame(self.tcl),
            "solver": pd.DataFrame(self.solver),
        }

    def slack_free_fraction(
        self, tolerance_kw: float, start_s: Optional[float] = None, end_s: Optional[float] = None
    ) -> float:
        """Share of recorded steps with t in (start_s, end_s] whose planned slack is within tolerance."""
        sub = pd.DataFrame(self.substation)
        if sub.empty:
            return 0.0
        window = np.ones(len(sub), dtype=bool)
        if start_s is not None:
            window &= sub["t_s"].to_numpy() > start_s
        if end_s is not None:
            window &= sub["t_s"].to_numpy() <= end_s
        if not window.any():
            return 0.0
        return float((sub.loc[window, "eps_kw"] <= tolerance_kw).mean())

    def rho_error(self) -> float:
        """Mean over steps and populations of ‖ρ̂ − ρ_predicted‖₁."""
        tcl = pd.DataFrame(self.tcl)
        if tcl.empty:
            return 0.0
        gap = (tcl["rho_hat"] - tcl["rho"]).abs().groupby([tcl["t"], tcl["population"]]).sum()
        return float(gap.mean())

    def summary(self, tolerance_kw: float, v_min: float, v_max: float) -> dict:
        sub = pd.DataFrame(self.substation)
        volt = pd.DataFrame(self.voltages)
        if sub.empty:
            return {"scenario": self.scenario, "seed": self.seed, "with_tcl": self.with_tcl, "steps": 0}
        tracking = (sub["p0_linear_kw"] - sub["p0_ref_kw"]).abs()
        over = np.maximum(v_min - volt["v_nonlinear_pu"], volt["v_nonlinear_pu"] - v_max).clip(lower=0.0)
        over_linear = np.maximum(v_min - volt["v_linear_pu"], volt["v_linear_pu"] - v_max).clip(lower=0.0)
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "with_tcl": self.with_tcl,
            "steps": int(len(sub)),
            "failed_step": self.failed_step,
            "total_eps_kw": float(sub["eps_kw"].sum()),
            "slack_violations": int((sub["eps_kw"] > tolerance_kw).sum()),
            "tracking_violations": int((tracking > tolerance_kw).sum()),
            "max_tracking_error_kw": float(tracking.max()),
            "total_curtailment_kw": float(sub["curtailment_kw"].sum()),
            "mean_linear_offset_kw": float((sub["p0_nonlinear_kw"] - sub["p0_linear_kw"]).mean()),
            "max_voltage_band_excess_pu": float(over.max()),
            "max_linear_voltage_band_excess_pu": float(over_linear.max()),
            "mean_rho_error_l1": self.rho_error(),
            "switches": int(sub["switches"].sum()),
            "objective": [float(v) for v in pd.DataFrame(self.solver)["objective"]],
            "iterations": [int(v) for v in pd.DataFrame(self.solver)["iterations"]],
            "timings": self.timings,
        }


def stratified_states(rho: StateDistribution, K: int) -> np.ndarray:
    """Deterministic assignment of K agents to states following ρ."""
    cdf = np.cumsum(rho.values)
    cdf[-1] = 1.0
    return np.searchsorted(cdf, (np.arange(K) + 0.5) / K, side="right")


def _populations(
    scenario: "Scenario", config: OpfConfig, controllable: bool
) -> list[tuple[Population, np.ndarray]]:
    built = []
    for doc in scenario.doc.populations:
        device = scenario.feeder.device(doc.device)
        grid = build_grid(scenario.params, doc.dx)
        chain = build_natural_chain(scenario.params, grid, config.dt_seconds)
        rho0 = initial_distribution(chain, doc.initial)
        built.append((Population(device, chain, rho0, controllable), stratified_states(rho0, device.agents)))
    return built


def run(
    scenario: "Scenario",
    config: Optional[OpfConfig] = None,
    seed: int = 0,
    with_tcl: bool = True,
    steps: Optional[int] = None,
    dump_qp: Optional[Path] = None,
) -> RunResult:
    """
    Simulate ``steps`` MPC steps (default: the scenario's).  On a module
    error the partial result is attached to the exception as
    ``context["partial_result"]`` and the error is re-raised.
    """
    config = config or scenario.config
    steps = scenario.steps if steps is None else steps
    feeder = scenario.feeder
    pv_devices = feeder.pv_devices
    result = RunResult(scenario=scenario.name, seed=seed, with_tcl=with_tcl)
    timings = {"linearize_s": 0.0, "solve_s": 0.0, "simulate_s": 0.0}

    built = _populations(scenario, config, controllable=with_tcl)
    populations = [pop for pop, _ in built]
    agents = [states for _, states in built]
    tcl_order = {d.id: n for n, d in enumerate(feeder.tcl_devices)}

    k = 0
    try:
        for k in range(steps):
            # poll
            estimates = [estimate_distribution(states, pop.chain.N) for pop, states in zip(populations, agents)]
            current = [Population(pop.device, pop.chain, est, pop.controllable)
                       for pop, est in zip(populations, estimates)]
            on_fraction = np.zeros(len(feeder.tcl_devices))
            for pop, est in zip(populations, estimates):
                on_fraction[tcl_order[pop.device.id]] = float(est.values @ pop.chain.power_weights)
            forecast, loads = scenario.forecast(k, config.horizon, config.forecast_mode)

            started = time.perf_counter()
            base, _, _ = base_point(feeder, loads[0], forecast.p_avail[0], tcl_fraction=on_fraction)
            sens = linearize(feeder, base, loads=loads, base_loads=loads[0])
            timings["linearize_s"] += time.perf_counter() - started

            plan = step(MpcState(k, current, forecast, agents), config, pv_devices, sens)
            timings["solve_s"] += plan.solve_time
            if dump_qp is not None and k == 0:
                dump_program(plan.problem.program, dump_qp)

            started = time.perf_counter()
            actual_avail = scenario.p_avail[k + 1]
            x = plan.pv_setpoints.copy()
            x[:, 0] = np.minimum(x[:, 0], actual_avail)

            tcl_power = np.zeros(len(feeder.tcl_devices))
            switches = 0
            for n, (pop, states) in enumerate(zip(populations, agents)):
                nxt = step_agents(pop.chain, plan.controls[n], states, seed, stream=n, step=k)
                on_before = pop.chain.grid.on_mask[states]
                on_after = pop.chain.grid.on_mask[nxt]
                switches += int(np.count_nonzero(on_before != on_after))
                agents[n] = nxt
                tcl_power[tcl_order[pop.device.id]] = pop.device.p_max * on_after.mean()

            actual_loads = scenario.loads(k + 1)
            v_lin, p0_lin = evaluate_linear(sens, x, tcl_power, t=0)
            exact = solve_power_flow(feeder, actual_loads + injections_for(feeder, x, tcl_power))
            timings["simulate_s"] += time.perf_counter() - started

            kw = feeder.base_kva
            result.substation.append({
                "step": k + 1,
                "t_s": (k + 1) * config.dt_seconds,
                "p0_ref_kw": scenario.reference[k + 1] * kw,
                "p0_linear_kw": p0_lin * kw,
                "p0_nonlinear_kw": exact.p0 * kw,
                "eps_kw": plan.first_slack * kw,
                "curtailment_kw": float(np.sum(actual_avail - x[:, 0])) * kw,
                "pv_p_kw": float(x[:, 0].sum()) * kw,
                "pv_q_kvar": float(x[:, 1].sum()) * kw,
                "tcl_kw": float(tcl_power.sum()) * kw,
                "switches": switches,
            })
            for node in range(1, feeder.num_nodes):
                result.voltages.append({
                    "step": k + 1,
                    "node": node,
                    "v_linear_pu": float(v_lin[node - 1]),
                    "v_nonlinear_pu": float(exact.v_mag[node]),
                })
            for n, (pop, states) in enumerate(zip(populations, agents)):
                rho_hat = estimate_distribution(states, pop.chain.N).values
                for i in range(pop.chain.N):
                    result.tcl.append({
                        "t": k + 1,
                        "population": pop.device.id,
                        "state_index": i,
                        "rho": float(plan.predicted_rho[n][1, i]),
                        "rho_hat": float(rho_hat[i]),
                    })
            result.solver.append({
                "step": k + 1,
                "status": plan.status.value,
                "iterations": plan.iterations,
                "objective": plan.objective,
                "kkt_worst": plan.kkt.worst,
            })
    except MarkovgridError as e:
        result.failed_step = k
        result.timings = timings
        e.context.setdefault("step", k)
        e.context["partial_result"] = result
        logger.error("Run '%s' stopped at step %d: %s", scenario.name, k, e)
        raise

    result.timings = timings
    logger.info("Run '%s' finished %d steps (tcl=%s, seed=%d)", scenario.name, steps, with_tcl, seed)
    return result
