"""
TCL ensembles as controlled Markov chains.

  • params.py:   thermal parameters and drift
  • chain.py:    temperature grid, CFL bound, natural chain, bookkeeping
  • control.py:  switch-probability control, its linear rows and the switch-joint elimination
  • agents.py:   Monte Carlo agents sampled from the chain
  • sde.py:      Euler-Maruyama thermostat oracle
"""
from .agents import AgentTrace, chain_marginals, sample_agents, step_agents
from .chain import (
    CflReport,
    TclChainModel,
    TemperatureGrid,
    agent_to_state,
    build_grid,
    build_natural_chain,
    check_cfl,
    estimate_distribution,
    expected_power,
    initial_distribution,
    state_to_temperature,
    stationary_distribution,
)
from .control import (
    ReducedRow,
    SwitchDynamics,
    apply_control,
    column_constraints,
    controls_from_policy,
    reachable_mass,
    reduced_control_constraints,
    switch_dynamics,
    switch_joints,
    zero_controls,
)
from .params import TclParameters, drift, heating_dominates, load_parameters
from .sde import SdeTrajectory, duty_cycle, simulate_sde

__all__ = [
    "AgentTrace",
    "CflReport",
    "ReducedRow",
    "SdeTrajectory",
    "SwitchDynamics",
    "TclChainModel",
    "TclParameters",
    "TemperatureGrid",
    "agent_to_state",
    "apply_control",
    "build_grid",
    "build_natural_chain",
    "chain_marginals",
    "check_cfl",
    "column_constraints",
    "controls_from_policy",
    "drift",
    "duty_cycle",
    "estimate_distribution",
    "expected_power",
    "heating_dominates",
    "initial_distribution",
    "load_parameters",
    "reachable_mass",
    "reduced_control_constraints",
    "sample_agents",
    "simulate_sde",
    "state_to_temperature",
    "stationary_distribution",
    "step_agents",
    "switch_dynamics",
    "switch_joints",
    "zero_controls",
]
