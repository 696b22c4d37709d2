"""
Distribution feeder models.

  • feeder.py:       radial feeder, devices and nodal injections
  • powerflow.py:    Newton-Raphson AC power flow
  • sensitivity.py:  finite-difference linear voltage / P_0 model
  • pv.py:           polyhedral PV capability set
"""
from .feeder import Branch, Device, FeederModel, Injections, injections_for, load_feeder
from .powerflow import BalanceReport, PowerFlowSolution, power_balance, solve_power_flow
from .pv import PvPolytope, pv_constraint_polytope
from .sensitivity import Sensitivities, SweepReport, base_point, evaluate_linear, linearize, sweep_error

__all__ = [
    "BalanceReport",
    "Branch",
    "Device",
    "FeederModel",
    "Injections",
    "PowerFlowSolution",
    "PvPolytope",
    "Sensitivities",
    "SweepReport",
    "base_point",
    "evaluate_linear",
    "injections_for",
    "linearize",
    "load_feeder",
    "power_balance",
    "pv_constraint_polytope",
    "solve_power_flow",
    "sweep_error",
]
