"""
Distributions, transition matrices and the joint-probability change of
variables M = Π·diag(ρ).

Column j of a transition matrix holds the probabilities of moving *out of*
state j, so distributions are column vectors and evolve as ρ^{t+1} = Π ρ^t.
State indices are zero-based throughout the package.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from ..config import settings
from ..errors import InputValidationError

logger = logging.getLogger(__name__)

SIMPLEX_TOL = 1e-9


# ─── Types ──────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class StateDistribution:
    """Probability mass per state at step ``time_index``."""

    values: np.ndarray
    time_index: int = 0

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.size == 0:
            raise InputValidationError("A state distribution must be a non-empty vector.")
        errors: list[str] = []
        if np.any(values < -SIMPLEX_TOL):
            errors.append(f"Distribution at t={self.time_index} has negative mass {values.min():.3e}.")
        if abs(values.sum() - 1.0) > SIMPLEX_TOL:
            errors.append(f"Distribution at t={self.time_index} sums to {values.sum():.12f}, not 1.")
        if errors:
            raise InputValidationError(errors)
        object.__setattr__(self, "values", values)

    @property
    def N(self) -> int:
        return int(self.values.size)

    @classmethod
    def from_solver(cls, values: np.ndarray, time_index: int, tol: float = 1e-6) -> "StateDistribution":
        """
        Accept a solver output that is a distribution up to ``tol``: tiny
        negative entries are clipped and the vector renormalized.
        """
        values = np.asarray(values, dtype=float)
        if values.min() < -tol or abs(values.sum() - 1.0) > tol:
            raise InputValidationError(
                f"Solver distribution at t={time_index} is outside the simplex "
                f"(min {values.min():.3e}, sum {values.sum():.12f})."
            )
        if values.min() < 0.0:
            logger.warning("Clipping negative probability %.3e at t=%d", values.min(), time_index)
        clipped = np.maximum(values, 0.0)
        return cls(clipped / clipped.sum(), time_index)


@dataclass(frozen=True)
class TransitionMatrix:
    """N×N matrix whose column j is the law of the next state given state j."""

    entries: np.ndarray

    def __post_init__(self) -> None:
        entries = np.asarray(self.entries, dtype=float)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise InputValidationError(f"Transition matrix must be square, got shape {entries.shape}.")
        object.__setattr__(self, "entries", entries)

    @property
    def N(self) -> int:
        return int(self.entries.shape[0])

    def is_valid(self, tol: float = SIMPLEX_TOL) -> bool:
        return validate_transition_matrix(self, tol)

    @classmethod
    def identity(cls, N: int) -> "TransitionMatrix":
        return cls(np.eye(N))


@dataclass(frozen=True)
class JointTransitionMatrix:
    """
    M_(i,j) = P(state j at t, state i at t+1).  Entries outside ``pattern``
    (when given) are structurally zero.
    """

    entries: np.ndarray
    source_marginal: StateDistribution
    pattern: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        entries = np.asarray(self.entries, dtype=float)
        N = self.source_marginal.N
        if entries.shape != (N, N):
            raise InputValidationError(f"Joint matrix has shape {entries.shape}, expected ({N}, {N}).")
        object.__setattr__(self, "entries", entries)

    @property
    def next_marginal(self) -> np.ndarray:
        return self.entries.sum(axis=1)

    def marginal_error(self) -> float:
        return float(np.max(np.abs(self.entries.sum(axis=0) - self.source_marginal.values)))


MatrixLike = Union[TransitionMatrix, np.ndarray]


def _entries(matrix: MatrixLike) -> np.ndarray:
    return matrix.entries if isinstance(matrix, TransitionMatrix) else np.asarray(matrix, dtype=float)


# ─── Operations ─────────────────────────────────────────────────────────────

def validate_transition_matrix(matrix: MatrixLike, tol: float = SIMPLEX_TOL) -> bool:
    """True iff every entry is >= −tol and every column sums to 1 within tol."""
    entries = _entries(matrix)
    if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
        return False
    if np.any(entries < -tol):
        return False
    return bool(np.all(np.abs(entries.sum(axis=0) - 1.0) <= tol))


def _check_dims(matrix: np.ndarray, rho: StateDistribution) -> None:
    if matrix.shape != (rho.N, rho.N):
        raise InputValidationError(
            f"Dimension mismatch: transition matrix {matrix.shape} vs distribution of length {rho.N}."
        )


def evolve(matrix: MatrixLike, rho: StateDistribution) -> StateDistribution:
    """One step of the chain: ρ^{t+1} = Π ρ^t."""
    entries = _entries(matrix)
    _check_dims(entries, rho)
    return StateDistribution(entries @ rho.values, rho.time_index + 1)


def to_joint(matrix: MatrixLike, rho: StateDistribution) -> JointTransitionMatrix:
    """M = Π diag(ρ)."""
    entries = _entries(matrix)
    _check_dims(entries, rho)
    return JointTransitionMatrix(entries * rho.values[None, :], rho)


def reconstruct_policy(
    joint: JointTransitionMatrix,
    rho: StateDistribution,
    fallback: MatrixLike,
    tol: float = settings.ZERO_MASS_TOL,
    marginal_tol: Optional[float] = None,
) -> TransitionMatrix:
    """
    Recover Π from M.  Columns with ρ_j > tol are M_(:,j) normalized by their
    own mass; the remaining columns are copied from ``fallback``.
    """
    marginal_tol = tol if marginal_tol is None else marginal_tol
    M = np.maximum(joint.entries, 0.0)
    fallback_entries = _entries(fallback)
    _check_dims(M, rho)
    _check_dims(fallback_entries, rho)

    mass = M.sum(axis=0)
    mismatch = np.abs(mass - rho.values)
    if np.any(mismatch > marginal_tol):
        bad = [int(j) for j in np.flatnonzero(mismatch > marginal_tol)]
        raise InputValidationError(
            f"Joint column sums differ from the marginal by up to {mismatch.max():.3e} "
            f"(columns {bad}).",
            context={"columns": bad},
        )

    policy = fallback_entries.copy()
    live = (rho.values > tol) & (mass > 0.0)
    policy[:, live] = M[:, live] / mass[live]
    return TransitionMatrix(policy)
