"""
MDP problem validation: rejects malformed or non-tractable problems before
anything is convexified.

Rules implemented:
  • horizon must be at least 1
  • ρ̄ must be a distribution over the N states
  • every variable reference lies inside its block (ρ^0..ρ^T, M^0..M^{T-1})
  • joint references must name an allowed transition
  • cost square weights must be nonnegative
  • CONVEX_RHO expressions reference only marginals
  • convex constraints must be affine (quadratic constraints are not tractable here)
  • LINEAR_COLUMN constraints reference one column of one step with N coefficients
  • every column of the transition pattern permits at least one successor
"""
from __future__ import annotations

import numpy as np

from ..errors import InputValidationError
from .core import SIMPLEX_TOL
from .enums import EXPRESSION_FORMS, ConstraintForm, VariableKind
from .problem import ConvexExpression, MdpProblem, VariableRef


# ─── Rule functions ─────────────────────────────────────────────────────────

def _check_horizon(problem: MdpProblem, errors: list[str]) -> None:
    if problem.horizon < 1:
        errors.append(f"Horizon must be at least 1, got T={problem.horizon}.")


def _check_initial_distribution(problem: MdpProblem, errors: list[str]) -> None:
    rho0 = np.asarray(problem.initial_distribution, dtype=float)
    if rho0.shape != (problem.num_states,):
        errors.append(f"rho0 has {rho0.size} entries but N={problem.num_states}.")
        return
    if np.any(rho0 < -SIMPLEX_TOL):
        errors.append("rho0 has negative entries.")
    if abs(rho0.sum() - 1.0) > SIMPLEX_TOL:
        errors.append(f"rho0 sums to {rho0.sum():.12f}, not 1.")


def _check_pattern(problem: MdpProblem, errors: list[str]) -> None:
    pattern = problem.pattern
    if pattern.shape != (problem.num_states, problem.num_states):
        errors.append(f"Allowed-transition pattern has shape {pattern.shape}.")
        return
    empty = [int(j) for j in np.flatnonzero(~pattern.any(axis=0))]
    if empty:
        errors.append(f"Columns {empty} permit no transition at all.")


def _ref_errors(problem: MdpProblem, ref: VariableRef) -> list[str]:
    N, T = problem.num_states, problem.horizon
    if ref.kind == VariableKind.RHO:
        if not (0 <= ref.t <= T and 0 <= ref.i < N):
            return [f"{ref} is outside rho[0..{T}][0..{N - 1}]."]
        return []
    if not (0 <= ref.t < T and 0 <= ref.i < N and ref.j is not None and 0 <= ref.j < N):
        return [f"{ref} is outside M[0..{T - 1}][0..{N - 1},0..{N - 1}]."]
    if problem.pattern.shape == (N, N) and not problem.pattern[ref.i, ref.j]:
        return [f"{ref} references a transition outside the allowed pattern."]
    return []


def _check_expression(problem: MdpProblem, expr: ConvexExpression, where: str, errors: list[str]) -> None:
    for ref in expr.variables():
        errors.extend(f"{where}: {msg}" for msg in _ref_errors(problem, ref))
    for square in expr.squares:
        if square.weight < 0:
            errors.append(f"{where}: square term has negative weight {square.weight} (not convex).")


def _check_cost(problem: MdpProblem, errors: list[str]) -> None:
    _check_expression(problem, problem.cost, "cost", errors)


def _check_constraints(problem: MdpProblem, errors: list[str]) -> None:
    N, T = problem.num_states, problem.horizon
    for k, con in enumerate(problem.constraints):
        where = f"constraint {k} ({con.form.value})"
        if con.form == ConstraintForm.LINEAR_COLUMN:
            if con.t is None or not 0 <= con.t < T:
                errors.append(f"{where}: step t={con.t} outside 0..{T - 1}.")
            if con.j is None or not 0 <= con.j < N:
                errors.append(f"{where}: column j={con.j} outside 0..{N - 1}.")
            if con.alpha is None or len(con.alpha) != N:
                errors.append(f"{where}: alpha must have {N} coefficients.")
            continue
        if con.form in EXPRESSION_FORMS:
            if con.expression is None:
                errors.append(f"{where}: missing expression.")
                continue
            if not con.expression.is_affine:
                errors.append(f"{where}: only affine constraint expressions are tractable.")
            if con.form == ConstraintForm.CONVEX_RHO and any(
                ref.kind != VariableKind.RHO for ref in con.expression.variables()
            ):
                errors.append(f"{where}: convex_rho constraints may reference marginals only.")
            _check_expression(problem, con.expression, where, errors)
            continue
        errors.append(f"{where}: unsupported constraint form.")


ALL_RULES = [
    _check_horizon,
    _check_initial_distribution,
    _check_pattern,
    _check_cost,
    _check_constraints,
]


# ─── Public API ─────────────────────────────────────────────────────────────

def validate_problem(problem: MdpProblem) -> None:
    """Run every rule and raise ``InputValidationError`` listing all failures."""
    errors = validate_problem_soft(problem)
    if errors:
        raise InputValidationError(errors)


def validate_problem_soft(problem: MdpProblem) -> list[str]:
    """Same as ``validate_problem`` but returns the messages instead of raising."""
    errors: list[str] = []
    for rule in ALL_RULES:
        rule(problem, errors)
    return errors
