"""
Controllable switching on top of the natural chain.

For a controllable column j the controller commands the switch probability
u_j = Π_ctrl(j±δ, j) and the natural transitions of the column are scaled:

    Π_ctrl(i, j) = (1 − u_j)·Π_nat(i, j)     for (i, j) ∈ F

Multiplying by ρ_j turns this into rows that are linear in (ρ, M) once the
switch joint M(j±δ, j) = u_j·ρ_j is the decision variable.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from ..errors import InputValidationError
from ..mdp.core import TransitionMatrix
from ..mdp.problem import TractableConstraint
from .chain import TclChainModel

CONTROL_TOL = 1e-12


def _check_controls(chain: TclChainModel, u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    expected = chain.controllable_columns.size
    if u.shape != (expected,):
        raise InputValidationError(f"Control vector has shape {u.shape}, expected ({expected},).")
    if np.any(u < -CONTROL_TOL) or np.any(u > 1.0 + CONTROL_TOL):
        raise InputValidationError(f"Switch probabilities must lie in [0, 1] (got {u.min():.4f}..{u.max():.4f}).")
    return np.clip(u, 0.0, 1.0)


def apply_control(chain: TclChainModel, u: Sequence[float]) -> TransitionMatrix:
    """Π_ctrl for one step; ``u`` is ordered as ``chain.controllable_columns``."""
    u = _check_controls(chain, np.asarray(u, dtype=float))
    Pi = chain.natural.entries.copy()
    cols = chain.controllable_columns
    Pi[:, cols] *= 1.0 - u[None, :]
    Pi[chain.switch_targets, cols] += u
    return TransitionMatrix(Pi)


def controls_from_policy(chain: TclChainModel, policy: TransitionMatrix) -> np.ndarray:
    """Read the commanded switch probabilities back out of a transition matrix."""
    return np.clip(policy.entries[chain.switch_targets, chain.controllable_columns], 0.0, 1.0)


def zero_controls(chain: TclChainModel, steps: int = 1) -> np.ndarray:
    return np.zeros((steps, chain.controllable_columns.size))


# ─── Reduced rows over (ρ, M) ───────────────────────────────────────────────

@dataclass(frozen=True)
class ReducedRow:
    """
    Σ_i joint[i]·M^t(i, j) + rho_coef·ρ^t_j  (== 0 when ``equality``, else <= 0)
    """

    t: int
    j: int
    joint: tuple[tuple[int, float], ...]
    rho_coef: float
    equality: bool
    label: str


def _pivot(rows: np.ndarray, j: int) -> int:
    return j if j in rows else int(rows[0])


def reduced_control_constraints(
    chain: TclChainModel, horizon: int, drop_dependent: bool = True
) -> list[ReducedRow]:
    """
    Per step t and column j:

      controllable:     M(i,j) + Π_nat(i,j)·M(j±δ,j) − Π_nat(i,j)·ρ_j = 0,  (i,j) ∈ F
                        M(j±δ,j) − ρ_j <= 0
      non-controllable: M(i,j) − Π_nat(i,j)·ρ_j = 0

    With ``drop_dependent`` one equality per column is left out; it is implied
    by the marginal row 1ᵀM(:,j) = ρ_j that the caller always emits.
    """
    Pi = chain.natural.entries
    fixed = chain.fixed_pattern
    switch_of = dict(zip(chain.controllable_columns.tolist(), chain.switch_targets.tolist()))
    rows: list[ReducedRow] = []
    for t in range(horizon):
        for j in range(chain.N):
            members = np.flatnonzero(fixed[:, j])
            skip = _pivot(members, j) if drop_dependent else -1
            target = switch_of.get(j)
            for i in members:
                if i == skip:
                    continue
                joint = [(int(i), 1.0)]
                if target is not None:
                    joint.append((int(target), float(Pi[i, j])))
                rows.append(ReducedRow(t, j, tuple(joint), -float(Pi[i, j]), True, f"fixed[{t}][{i},{j}]"))
            if target is not None:
                rows.append(ReducedRow(t, j, ((int(target), 1.0),), -1.0, False, f"switch[{t}][{j}]"))
    return rows


# ─── Switch-joint elimination ───────────────────────────────────────────────

@dataclass(frozen=True)
class SwitchDynamics:
    """
    One controlled step written in the switch joints m_j = M(j±δ, j) only:

        ρ^{t+1} = natural·ρ^t + switch·m^t,    0 <= m_j <= ρ^t_j

    Every other joint follows from the equality reduced rows as
    M(i,j) = Π_nat(i,j)·(ρ_j − m_j), so the marginal rows hold identically.
    """

    natural: sp.csr_matrix         # N × N
    switch: sp.csr_matrix          # N × |C|, columns ordered as ``chain.controllable_columns``

    def advance(self, rho: np.ndarray, m: np.ndarray) -> np.ndarray:
        return self.natural @ rho + self.switch @ m


def switch_dynamics(chain: TclChainModel) -> SwitchDynamics:
    """Solve the equality reduced rows for the fixed-pattern joints and collect the result."""
    column_of = {int(j): c for c, j in enumerate(chain.controllable_columns)}
    nat_rows, nat_cols, nat_vals = [], [], []
    sw_rows, sw_cols, sw_vals = [], [], []
    for row in reduced_control_constraints(chain, 1, drop_dependent=False):
        if not row.equality:
            continue
        i = row.joint[0][0]
        nat_rows.append(i)
        nat_cols.append(row.j)
        nat_vals.append(-row.rho_coef)
        for _, coef in row.joint[1:]:
            sw_rows.append(i)
            sw_cols.append(column_of[row.j])
            sw_vals.append(-coef)
    for c, target in enumerate(chain.switch_targets):
        sw_rows.append(int(target))
        sw_cols.append(c)
        sw_vals.append(1.0)
    N = chain.N
    return SwitchDynamics(
        natural=sp.csr_matrix((nat_vals, (nat_rows, nat_cols)), shape=(N, N)),
        switch=sp.csr_matrix((sw_vals, (sw_rows, sw_cols)), shape=(N, len(column_of))),
    )


def switch_joints(chain: TclChainModel, rho: np.ndarray, m: np.ndarray) -> np.ndarray:
    """The full joint matrix of one step from ρ^t and the switch joints m^t."""
    cols = chain.controllable_columns
    free = np.asarray(rho, dtype=float).copy()
    free[cols] -= m
    M = chain.natural.entries * free[None, :]
    M[chain.switch_targets, cols] += m
    return M


def reachable_mass(chain: TclChainModel, rho0: np.ndarray, horizon: int) -> np.ndarray:
    """
    Upper bound on ρ^t_j over every control sequence, t = 0..horizon−1.
    A switch can move a whole column, so the switch targets take weight 1.
    """
    upper = chain.natural.entries.copy()
    upper[chain.switch_targets, chain.controllable_columns] = 1.0
    bound = np.asarray(rho0, dtype=float)
    reach = np.zeros((horizon, chain.N))
    for t in range(horizon):
        reach[t] = bound
        bound = np.minimum(upper @ bound, 1.0)
    return reach


def column_constraints(chain: TclChainModel, horizon: int) -> list[TractableConstraint]:
    """
    The same control structure as LINEAR_COLUMN equalities on Π, for use with
    the generic MDP convexification:

      controllable:     Π(i,j) + Π_nat(i,j)·Π(j±δ,j) = Π_nat(i,j)
      non-controllable: Π(i,j) = Π_nat(i,j)
    """
    Pi = chain.natural.entries
    fixed = chain.fixed_pattern
    switch_of = dict(zip(chain.controllable_columns.tolist(), chain.switch_targets.tolist()))
    constraints: list[TractableConstraint] = []
    for t in range(horizon):
        for j in range(chain.N):
            target = switch_of.get(j)
            for i in np.flatnonzero(fixed[:, j]):
                alpha = np.zeros(chain.N)
                alpha[i] = 1.0
                if target is not None:
                    alpha[target] = Pi[i, j]
                constraints.extend(TractableConstraint.column_equality(t, j, alpha, Pi[i, j]))
    return constraints
