"""
Sparse convex QP solver.

  • program.py:  ConvexProgram, ProgramBuilder, Solution types
  • ipm.py:      Mehrotra predictor-corrector interior-point method
  • kkt.py:      KKT residual certification
  • dump.py:     COO text dump for cross-checking with external solvers
"""
from .dump import dump_program, load_program
from .ipm import InteriorPointSolver, is_positive_semidefinite, solve
from .kkt import KktReport, verify_kkt
from .program import (
    ConvexProgram,
    FarkasCertificate,
    IterateRecord,
    ProgramBuilder,
    Solution,
    SolverConfig,
    SolveStatus,
)

__all__ = [
    "ConvexProgram",
    "FarkasCertificate",
    "InteriorPointSolver",
    "IterateRecord",
    "KktReport",
    "ProgramBuilder",
    "Solution",
    "SolverConfig",
    "SolveStatus",
    "dump_program",
    "is_positive_semidefinite",
    "load_program",
    "solve",
    "verify_kkt",
]
