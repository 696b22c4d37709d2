"""
Receding-horizon control of PV inverters and TCL populations.

  • problem.py:     horizon QP assembly
  • controller.py:  one planning step
  • runner.py:      closed-loop simulation against agents and the AC feeder
"""
from .controller import MpcState, StepResult, plan_once, step
from .problem import FORECAST_MODES, Forecast, MultiPeriodProblem, OpfConfig, Population, assemble
from .runner import RunResult, run, stratified_states

__all__ = [
    "FORECAST_MODES",
    "Forecast",
    "MpcState",
    "MultiPeriodProblem",
    "OpfConfig",
    "Population",
    "RunResult",
    "StepResult",
    "assemble",
    "plan_once",
    "run",
    "step",
    "stratified_states",
]
