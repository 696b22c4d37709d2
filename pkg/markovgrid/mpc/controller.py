"""
One receding-horizon planning step: solve the horizon QP and read out the
first-step PV setpoints and switch probabilities.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import ConvergenceError, InfeasibleError
from ..grid import Device, Sensitivities
from ..mdp.core import JointTransitionMatrix, reconstruct_policy
from ..solver import KktReport, Solution, SolveStatus, solve, verify_kkt
from ..tcl import controls_from_policy, switch_joints, zero_controls
from .problem import Forecast, MultiPeriodProblem, OpfConfig, Population, assemble

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MpcState:
    """What the aggregator knows at the start of step ``step``."""

    step: int
    populations: list[Population]
    forecast: Forecast
    agent_states: list[np.ndarray] = field(default_factory=list)


@dataclass
class StepResult:
    pv_setpoints: np.ndarray            # num_pv × 2, pu
    controls: list[np.ndarray]          # per population, switch probabilities
    objective: float
    slack: np.ndarray                   # ε^1..ε^T
    predicted_rho: list[np.ndarray]     # per population, ρ^0..ρ^T
    status: SolveStatus
    iterations: int
    solve_time: float
    kkt: KktReport
    problem: MultiPeriodProblem
    solution: Solution

    @property
    def first_slack(self) -> float:
        return float(self.slack[0])


def _first_step_controls(problem: MultiPeriodProblem, x: np.ndarray, marginal_tol: float) -> list[np.ndarray]:
    controls = []
    for k, pop in enumerate(problem.populations):
        if not pop.controllable:
            controls.append(zero_controls(pop.chain)[0])
            continue
        rho0 = pop.rho0
        entries = switch_joints(pop.chain, rho0.values, problem.switches(x, k)[0])
        joint = JointTransitionMatrix(entries, rho0, pop.chain.allowed_pattern)
        policy = reconstruct_policy(joint, rho0, pop.chain.natural, marginal_tol=marginal_tol)
        controls.append(controls_from_policy(pop.chain, policy))
    return controls


def step(
    state: MpcState,
    config: OpfConfig,
    pv_devices: Sequence[Device],
    sens: Sensitivities,
) -> StepResult:
    """
    Plan from ``state`` without advancing it.  A non-optimal solve raises
    ``InfeasibleError`` or ``ConvergenceError`` with the step index and the
    solver history attached.
    """
    started = time.perf_counter()
    problem = assemble(config, state.populations, sens, pv_devices, state.forecast)
    solution = solve(problem.program, config.solver)
    elapsed = time.perf_counter() - started

    context = {"step": state.step, "iterations": solution.iterations, "status": solution.status.value}
    if solution.status == SolveStatus.INFEASIBLE:
        raise InfeasibleError(f"MPC step {state.step}: the horizon problem is infeasible.", context=context)
    if solution.status != SolveStatus.OPTIMAL:
        raise ConvergenceError(
            f"MPC step {state.step}: solver stopped with status {solution.status.value}.",
            residual_history=[rec.primal_residual for rec in solution.history],
            context=context,
        )

    x = solution.x
    marginal_tol = max(1e-6, 1e3 * config.solver.tol)
    result = StepResult(
        pv_setpoints=problem.pv_setpoints(x)[0],
        controls=_first_step_controls(problem, x, marginal_tol),
        objective=solution.objective,
        slack=problem.slack(x),
        predicted_rho=[problem.rho(x, k) for k in range(len(problem.populations))],
        status=solution.status,
        iterations=solution.iterations,
        solve_time=elapsed,
        kkt=verify_kkt(problem.program, solution, config.solver.tol),
        problem=problem,
        solution=solution,
    )
    logger.info("MPC step %d: objective %.6g, eps[1]=%.3e, %d iterations, %.2fs",
                state.step, result.objective, result.first_slack, result.iterations, elapsed)
    return result


def plan_once(
    config: OpfConfig,
    populations: Sequence[Population],
    pv_devices: Sequence[Device],
    sens: Sensitivities,
    forecast: Forecast,
    step_index: int = 0,
) -> StepResult:
    return step(MpcState(step_index, list(populations), forecast), config, pv_devices, sens)
