"""
Joint-probability convexification of a constrained finite-horizon MDP.

With M^t = Π^t diag(ρ^t) the bilinear dynamics ρ^{t+1} = Π^t ρ^t become

    ρ^{t+1} = M^t 1,    1ᵀM^t = (ρ^t)ᵀ,    M^t >= 0,    ρ^0 = ρ̄

and a column constraint Σ_i α_i Π^t_(i,j) <= β becomes the linear row
Σ_i α_i M^t_(i,j) − β ρ^t_j <= 0.  Any optimal (ρ, M) maps back to a policy
through ``reconstruct_policy``; columns without mass take the feasibility
witness, and a column that misses one of its constraints after normalization
is blended toward the witness column.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import ConvergenceError, InfeasibleError
from ..solver import (
    ConvexProgram,
    KktReport,
    ProgramBuilder,
    Solution,
    SolverConfig,
    SolveStatus,
    solve,
    verify_kkt,
)
from .core import JointTransitionMatrix, StateDistribution, TransitionMatrix, reconstruct_policy
from .enums import EXPRESSION_FORMS, ConstraintForm, VariableKind
from .feasibility import FeasibilityResult, check_input_feasibility
from .problem import ConvexExpression, MdpProblem, VariableRef
from .rows import LinearRow, emit_rows, pair_inequalities
from .validation import validate_problem

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConvexifiedProblem:
    """The emitted program plus the maps from (t, i[, j]) to variable columns."""

    program: ConvexProgram
    rho_index: np.ndarray          # (T+1) × N
    joint_index: np.ndarray        # T × N × N, −1 off the pattern
    feasibility: FeasibilityResult

    def column(self, ref: VariableRef) -> int:
        if ref.kind == VariableKind.RHO:
            return int(self.rho_index[ref.t, ref.i])
        return int(self.joint_index[ref.t, ref.i, ref.j])

    def rho_values(self, x: np.ndarray) -> np.ndarray:
        return x[self.rho_index]

    def joint_values(self, x: np.ndarray) -> np.ndarray:
        values = np.zeros(self.joint_index.shape)
        mask = self.joint_index >= 0
        values[mask] = x[self.joint_index[mask]]
        return values


def _expression_rows(expr: ConvexExpression, column_of, label: str) -> LinearRow:
    coefs: dict[int, float] = {}
    for ref, coef in expr.linear:
        col = column_of(ref)
        coefs[col] = coefs.get(col, 0.0) + coef
    return LinearRow.make(coefs, -expr.constant, label)


def _add_cost(builder: ProgramBuilder, cost: ConvexExpression, column_of) -> None:
    for ref, coef in cost.linear:
        builder.add_linear_cost([column_of(ref)], [coef])
    for square in cost.squares:
        coefs: dict[int, float] = {}
        for ref, coef in square.terms:
            col = column_of(ref)
            coefs[col] = coefs.get(col, 0.0) + coef
        builder.add_square(list(coefs), list(coefs.values()), offset=square.offset, weight=square.weight)
    builder.add_constant(cost.constant)


def convexify(problem: MdpProblem, config: Optional[SolverConfig] = None) -> ConvexifiedProblem:
    """
    Emit the convex program over (ρ^0..ρ^T, M^0..M^{T-1}).

    Raises ``InputValidationError`` for malformed or non-tractable problems and
    ``InfeasibleError`` (with the offending ``columns``) when no transition
    matrices satisfy the column constraints.
    """
    validate_problem(problem)
    N, T = problem.num_states, problem.horizon
    pattern = problem.pattern

    feasibility = check_input_feasibility(problem.constraints, N, T, pattern, config)
    if not feasibility:
        columns = [list(c) for c in feasibility.infeasible_columns]
        raise InfeasibleError(
            [f"No valid transition matrix satisfies the column constraints of (t, j) = {tuple(c)}."
             for c in columns],
            context={"columns": columns},
        )

    builder = ProgramBuilder()
    rho_index = np.vstack([
        builder.add_variables(f"rho{t}", N, lb=0.0, labels=[f"rho[{t}][{i}]" for i in range(N)])
        for t in range(T + 1)
    ])
    joint_index = -np.ones((T, N, N), dtype=int)
    rows_i, cols_j = np.nonzero(pattern)
    for t in range(T):
        cols = builder.add_variables(
            f"M{t}", rows_i.size, lb=0.0, labels=[f"M[{t}][{i},{j}]" for i, j in zip(rows_i, cols_j)]
        )
        joint_index[t, rows_i, cols_j] = cols

    def column_of(ref: VariableRef) -> int:
        if ref.kind == VariableKind.RHO:
            return int(rho_index[ref.t, ref.i])
        return int(joint_index[ref.t, ref.i, ref.j])

    rho0 = np.asarray(problem.initial_distribution, dtype=float)
    for i in range(N):
        builder.add_equality([rho_index[0, i]], [1.0], rho0[i], label=f"init[{i}]")
    for t in range(T):
        for i in range(N):
            members = joint_index[t, i][joint_index[t, i] >= 0]
            builder.add_equality(
                list(members) + [rho_index[t + 1, i]],
                [1.0] * members.size + [-1.0], 0.0, label=f"dynamics[{t}][{i}]",
            )
        for j in range(N):
            members = joint_index[t, :, j][joint_index[t, :, j] >= 0]
            builder.add_equality(
                list(members) + [rho_index[t, j]],
                [1.0] * members.size + [-1.0], 0.0, label=f"marginal[{t}][{j}]",
            )

    rows: list[LinearRow] = []
    for k, con in enumerate(problem.constraints):
        if con.form == ConstraintForm.LINEAR_COLUMN:
            coefs = {
                int(joint_index[con.t, i, con.j]): float(a)
                for i, a in enumerate(con.alpha)
                if a != 0.0 and joint_index[con.t, i, con.j] >= 0
            }
            col_rho = int(rho_index[con.t, con.j])
            coefs[col_rho] = coefs.get(col_rho, 0.0) - float(con.beta)
            rows.append(LinearRow.make(coefs, 0.0, f"column[{con.t}][{con.j}]#{k}"))
        elif con.form in EXPRESSION_FORMS:
            rows.append(_expression_rows(con.expression, column_of, f"{con.form.value}#{k}"))
    emit_rows(builder, pair_inequalities(rows))

    _add_cost(builder, problem.cost, column_of)
    program = builder.build()
    logger.info(
        "Convexified MDP N=%d T=%d: %d variables, %d equalities, %d inequalities",
        N, T, program.n, program.num_eq, program.num_in,
    )
    return ConvexifiedProblem(program, rho_index, joint_index, feasibility)


# ─── End-to-end pipeline ────────────────────────────────────────────────────

COLUMN_VIOLATION_TOL = 1e-10


def _repair_columns(
    problem: MdpProblem,
    t: int,
    policy: TransitionMatrix,
    witness: TransitionMatrix,
) -> TransitionMatrix:
    """
    A normalized column misses its column constraints by up to the solver
    residual over the column mass.  Such a column is blended toward the
    witness column, Π_j ← (1 − λ)Π_j + λW_j, with the smallest λ that
    satisfies every constraint on it.
    """
    entries = policy.entries.copy()
    blend: dict[int, float] = {}
    for con in problem.linear_column_constraints():
        if con.t != t:
            continue
        excess = float(np.dot(con.alpha, entries[:, con.j]) - con.beta)
        if excess <= COLUMN_VIOLATION_TOL:
            continue
        margin = float(con.beta - np.dot(con.alpha, witness.entries[:, con.j]))
        lam = excess / (excess + margin) if margin > 0.0 else 1.0
        blend[con.j] = max(blend.get(con.j, 0.0), min(lam, 1.0))
    for j, lam in blend.items():
        logger.debug("Column (t=%d, j=%d) blended toward the witness column, λ=%.3e", t, j, lam)
        entries[:, j] = (1.0 - lam) * entries[:, j] + lam * witness.entries[:, j]
    return TransitionMatrix(entries)


@dataclass
class MdpSolution:
    status: SolveStatus
    objective: float
    distributions: list[StateDistribution]
    joints: list[JointTransitionMatrix]
    policies: list[TransitionMatrix]
    kkt: KktReport
    solution: Solution
    convexified: ConvexifiedProblem


def solve_mdp(problem: MdpProblem, config: Optional[SolverConfig] = None) -> MdpSolution:
    """Feasibility gate → convexify → solve → reconstruct Π^0..Π^{T-1}."""
    config = config or SolverConfig()
    convexified = convexify(problem, config)
    solution = solve(convexified.program, config)
    if solution.status == SolveStatus.INFEASIBLE:
        raise InfeasibleError("The convexified MDP has no feasible point.",
                              context={"iterations": solution.iterations})
    if solution.status != SolveStatus.OPTIMAL:
        raise ConvergenceError(
            f"MDP solve ended with status {solution.status.value} after {solution.iterations} iterations.",
            residual_history=[rec.primal_residual for rec in solution.history],
        )

    marginal_tol = max(1e-6, 1e3 * config.tol)
    rho_values = convexified.rho_values(solution.x)
    joint_values = convexified.joint_values(solution.x)
    distributions = [
        StateDistribution.from_solver(rho_values[t], t, marginal_tol) for t in range(problem.horizon + 1)
    ]
    joints: list[JointTransitionMatrix] = []
    policies: list[TransitionMatrix] = []
    for t in range(problem.horizon):
        joint = JointTransitionMatrix(joint_values[t], distributions[t], problem.pattern)
        joints.append(joint)
        witness = convexified.feasibility.witness[t]
        policy = reconstruct_policy(joint, distributions[t], witness, marginal_tol=marginal_tol)
        policies.append(_repair_columns(problem, t, policy, witness))
    return MdpSolution(
        status=solution.status,
        objective=solution.objective,
        distributions=distributions,
        joints=joints,
        policies=policies,
        kkt=verify_kkt(convexified.program, solution, config.tol),
        solution=solution,
        convexified=convexified,
    )
