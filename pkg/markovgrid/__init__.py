"""
markovgrid
==========
Constrained finite-horizon MDP control of thermostatically controlled load
ensembles, coordinated with PV inverters on a distribution feeder.

Key principles:
  1. The MDP over transition matrices is solved as a convex program in the
     joint probabilities M = Π·diag(ρ)
  2. TCL populations are Markov chains discretized from their Fokker-Planck model
  3. The feeder enters the optimization through a linear model checked
     against the full AC power flow
  4. A receding-horizon controller re-plans every step from polled agent states
"""

from .config import settings
from .errors import ConvergenceError, InfeasibleError, InputValidationError, MarkovgridError

__version__ = settings.APP_VERSION

__all__ = [
    "ConvergenceError",
    "InfeasibleError",
    "InputValidationError",
    "MarkovgridError",
    "settings",
    "__version__",
]
