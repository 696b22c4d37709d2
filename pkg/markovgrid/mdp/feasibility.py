"""
Input-feasibility gate: do transition matrices Π^0..Π^{T-1} exist that
satisfy every LINEAR_COLUMN constraint?

Columns are independent, so each constrained (t, j) column is checked on its
own by projecting the unit vector e_j onto

    {π >= 0, 1ᵀπ = 1, π_i = 0 off the pattern, linear column rows}

The projection doubles as the witness: unconstrained or already-satisfied
columns keep the identity column, so the witness is identity-completed.
"""
from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..solver import ProgramBuilder, SolverConfig, SolveStatus, solve
from .core import TransitionMatrix
from .enums import ConstraintForm
from .problem import TractableConstraint
from .rows import LinearRow, emit_rows, pair_inequalities

logger = logging.getLogger(__name__)

WITNESS_TOL = 1e-9


@dataclass
class FeasibilityResult:
    feasible: bool
    witness: Optional[list[TransitionMatrix]] = None
    infeasible_columns: list[tuple[int, int]] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.feasible


def _default_column(j: int, allowed: np.ndarray) -> np.ndarray:
    column = np.zeros(allowed.size)
    if allowed[j]:
        column[j] = 1.0
    else:
        column[allowed] = 1.0 / allowed.sum()
    return column


def _satisfies(column: np.ndarray, constraints: Sequence[TractableConstraint]) -> bool:
    return all(np.dot(con.alpha, column) - con.beta <= WITNESS_TOL for con in constraints)


def _project_column(
    t: int,
    j: int,
    allowed: np.ndarray,
    constraints: Sequence[TractableConstraint],
    config: SolverConfig,
) -> Optional[np.ndarray]:
    """Closest feasible column to e_j, or None when the column is infeasible."""
    N = allowed.size
    states = np.flatnonzero(allowed)
    builder = ProgramBuilder()
    pi = builder.add_variables(f"pi{t},{j}", states.size, lb=0.0,
                               labels=[f"Pi[{t}][{i},{j}]" for i in states])
    builder.add_equality(pi, np.ones(states.size), 1.0, label=f"sum[{t}][{j}]")
    position = {int(i): int(col) for i, col in zip(states, pi)}
    for i in states:
        builder.add_square([position[int(i)]], [1.0], offset=1.0 if i == j else 0.0)

    rows = []
    for k, con in enumerate(constraints):
        coefs = {position[i]: float(con.alpha[i]) for i in range(N) if i in position}
        rows.append(LinearRow.make(coefs, con.beta, f"column[{t}][{j}]#{k}"))
    emit_rows(builder, pair_inequalities(rows))

    solution = solve(builder.build(), config)
    if solution.status != SolveStatus.OPTIMAL:
        logger.info("Column (t=%d, j=%d) has no feasible completion (%s)", t, j, solution.status.value)
        return None
    column = np.zeros(N)
    column[states] = np.maximum(solution.x[pi], 0.0)
    return column / column.sum()


def check_input_feasibility(
    constraints: Sequence[TractableConstraint],
    N: int,
    T: int,
    allowed: Optional[np.ndarray] = None,
    config: Optional[SolverConfig] = None,
) -> FeasibilityResult:
    """
    Decide whether the LINEAR_COLUMN constraints admit valid transition
    matrices; on success the result carries one witness Π^t per step.
    Constraints of the other forms are ignored here.
    """
    config = config or SolverConfig()
    pattern = np.ones((N, N), dtype=bool) if allowed is None else np.asarray(allowed, dtype=bool)

    by_column: dict[tuple[int, int], list[TractableConstraint]] = defaultdict(list)
    for con in constraints:
        if con.form == ConstraintForm.LINEAR_COLUMN:
            by_column[(con.t, con.j)].append(con)

    witness = [np.zeros((N, N)) for _ in range(T)]
    infeasible: list[tuple[int, int]] = []
    for t in range(T):
        for j in range(N):
            column_allowed = pattern[:, j]
            if not column_allowed.any():
                infeasible.append((t, j))
                continue
            column = _default_column(j, column_allowed)
            cons = by_column.get((t, j), [])
            if cons and not _satisfies(column, cons):
                column = _project_column(t, j, column_allowed, cons, config)
                if column is None:
                    infeasible.append((t, j))
                    continue
            witness[t][:, j] = column

    if infeasible:
        logger.info("Input feasibility failed on %d column(s): %s", len(infeasible), infeasible)
        return FeasibilityResult(False, None, infeasible)
    return FeasibilityResult(True, [TransitionMatrix(w) for w in witness], [])
