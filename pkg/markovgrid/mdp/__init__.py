"""
Finite-horizon constrained MDPs.

  • core.py:         distributions, transition and joint matrices
  • problem.py:      cost/constraint expressions, MdpProblem, JSON I/O
  • validation.py:   problem validation rules
  • feasibility.py:  column-constraint feasibility gate and witness
  • convexify.py:    joint-probability convexification and solve pipeline
"""
from .convexify import ConvexifiedProblem, MdpSolution, convexify, solve_mdp
from .core import (
    JointTransitionMatrix,
    StateDistribution,
    TransitionMatrix,
    evolve,
    reconstruct_policy,
    to_joint,
    validate_transition_matrix,
)
from .enums import ConstraintForm, VariableKind
from .feasibility import FeasibilityResult, check_input_feasibility
from .problem import (
    ConvexExpression,
    MdpProblem,
    SquareTerm,
    TractableConstraint,
    VariableRef,
    dump_problem,
    load_problem,
)
from .validation import validate_problem, validate_problem_soft

__all__ = [
    "ConstraintForm",
    "ConvexExpression",
    "ConvexifiedProblem",
    "FeasibilityResult",
    "JointTransitionMatrix",
    "MdpProblem",
    "MdpSolution",
    "SquareTerm",
    "StateDistribution",
    "TractableConstraint",
    "TransitionMatrix",
    "VariableKind",
    "VariableRef",
    "check_input_feasibility",
    "convexify",
    "dump_problem",
    "evolve",
    "load_problem",
    "reconstruct_policy",
    "solve_mdp",
    "to_joint",
    "validate_problem",
    "validate_problem_soft",
    "validate_transition_matrix",
]
