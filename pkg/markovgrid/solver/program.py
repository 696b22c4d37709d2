"""
Sparse convex quadratic programs.

    minimize    ½ xᵀQx + cᵀx + constant
    subject to  A_eq x  = b_eq
                A_in x <= b_in
                lb <= x <= ub          (±inf allowed)

``ProgramBuilder`` accumulates variables, rows and cost terms as triplets and
emits an immutable ``ConvexProgram``; both the MDP convexification and the
multi-period OPF assembly go through it.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from ..config import settings
from ..errors import InputValidationError

logger = logging.getLogger(__name__)


class SolveStatus(str, Enum):
    """Termination status of an interior-point solve."""
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    MAX_ITER = "max_iter"


@dataclass(frozen=True)
class SolverConfig:
    """Per-call solver options (defaults come from ``settings``)."""

    tol: float = settings.SOLVER_TOL
    max_iter: int = settings.SOLVER_MAX_ITER
    regularization: float = settings.KKT_REGULARIZATION
    infeasibility_tol: float = settings.INFEASIBILITY_TOL
    refinement_steps: int = 3


# ─── Program ───────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class ConvexProgram:
    """Immutable sparse QP.  Matrices are stored in CSR (Q in CSC)."""

    Q: sp.csc_matrix
    c: np.ndarray
    A_eq: sp.csr_matrix
    b_eq: np.ndarray
    A_in: sp.csr_matrix
    b_in: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    names: tuple[str, ...] = ()
    eq_labels: tuple[str, ...] = ()
    in_labels: tuple[str, ...] = ()
    constant: float = 0.0

    def __post_init__(self) -> None:
        errors: list[str] = []
        n = self.n
        if self.Q.shape != (n, n):
            errors.append(f"Q has shape {self.Q.shape}, expected ({n}, {n}).")
        if self.A_eq.shape[1] != n or self.A_eq.shape[0] != self.b_eq.shape[0]:
            errors.append(
                f"A_eq has shape {self.A_eq.shape} but b_eq has {self.b_eq.shape[0]} rows "
                f"and the program has {n} variables."
            )
        if self.A_in.shape[1] != n or self.A_in.shape[0] != self.b_in.shape[0]:
            errors.append(
                f"A_in has shape {self.A_in.shape} but b_in has {self.b_in.shape[0]} rows "
                f"and the program has {n} variables."
            )
        if self.lb.shape != (n,) or self.ub.shape != (n,):
            errors.append("Variable bounds must have one entry per variable.")
        elif np.any(self.lb > self.ub):
            bad = int(np.flatnonzero(self.lb > self.ub)[0])
            errors.append(f"Lower bound exceeds upper bound for variable {self._name(bad)}.")
        if self.Q.nnz and abs(self.Q - self.Q.T).max() > 1e-12 * max(1.0, abs(self.Q).max()):
            errors.append("Q must be symmetric.")
        if self.names and len(self.names) != n:
            errors.append("Variable name table does not match the variable count.")
        if errors:
            raise InputValidationError(errors)

    @property
    def n(self) -> int:
        return int(self.c.shape[0])

    @property
    def num_eq(self) -> int:
        return int(self.A_eq.shape[0])

    @property
    def num_in(self) -> int:
        return int(self.A_in.shape[0])

    def _name(self, index: int) -> str:
        return self.names[index] if self.names else f"x[{index}]"

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ (self.Q @ x) + self.c @ x + self.constant)

    def scaled(self, factor: float) -> "ConvexProgram":
        """Same feasible set, objective multiplied by ``factor``."""
        return ConvexProgram(
            Q=(self.Q * factor).tocsc(), c=self.c * factor, A_eq=self.A_eq, b_eq=self.b_eq,
            A_in=self.A_in, b_in=self.b_in, lb=self.lb, ub=self.ub, names=self.names,
            eq_labels=self.eq_labels, in_labels=self.in_labels, constant=self.constant * factor,
        )

    @classmethod
    def from_dense(
        cls,
        Q=None,
        c=None,
        A_eq=None,
        b_eq=None,
        A_in=None,
        b_in=None,
        lb=None,
        ub=None,
        n: Optional[int] = None,
    ) -> "ConvexProgram":
        """Convenience constructor for small, hand-written programs."""
        if n is None:
            n = len(c) if c is not None else np.asarray(Q).shape[0]
        Q = sp.csc_matrix(np.zeros((n, n)) if Q is None else np.asarray(Q, dtype=float))
        c = np.zeros(n) if c is None else np.asarray(c, dtype=float)
        A_eq = sp.csr_matrix(np.zeros((0, n)) if A_eq is None else np.atleast_2d(np.asarray(A_eq, dtype=float)))
        b_eq = np.zeros(0) if b_eq is None else np.atleast_1d(np.asarray(b_eq, dtype=float))
        A_in = sp.csr_matrix(np.zeros((0, n)) if A_in is None else np.atleast_2d(np.asarray(A_in, dtype=float)))
        b_in = np.zeros(0) if b_in is None else np.atleast_1d(np.asarray(b_in, dtype=float))
        lb = np.full(n, -np.inf) if lb is None else np.asarray(lb, dtype=float)
        ub = np.full(n, np.inf) if ub is None else np.asarray(ub, dtype=float)
        return cls(Q=Q, c=c, A_eq=A_eq, b_eq=b_eq, A_in=A_in, b_in=b_in, lb=lb, ub=ub)


# ─── Builder ────────────────────────────────────────────────────────────────

@dataclass
class _Rows:
    rows: list[int] = field(default_factory=list)
    cols: list[int] = field(default_factory=list)
    vals: list[float] = field(default_factory=list)
    rhs: list[float] = field(default_factory=list)
    labels: list[str] = field(default_factory=list)

    def add(self, cols: Sequence[int], coefs: Sequence[float], rhs: float, label: str) -> int:
        row = len(self.rhs)
        for col, coef in zip(cols, coefs):
            if coef != 0.0:
                self.rows.append(row)
                self.cols.append(int(col))
                self.vals.append(float(coef))
        self.rhs.append(float(rhs))
        self.labels.append(label)
        return row

    def matrix(self, n: int) -> sp.csr_matrix:
        return sp.csr_matrix(
            (np.asarray(self.vals, dtype=float), (np.asarray(self.rows, dtype=int), np.asarray(self.cols, dtype=int))),
            shape=(len(self.rhs), n),
        )


class ProgramBuilder:
    """
    Incrementally assemble a ``ConvexProgram``.

    Usage::

        b = ProgramBuilder()
        x = b.add_variables("x", 2)
        b.add_equality(x, [1.0, 1.0], 2.0, label="sum")
        b.add_diagonal_quadratic(x, [1.0, 1.0])
        program = b.build()
    """

    def __init__(self) -> None:
        self._names: list[str] = []
        self._lb: list[float] = []
        self._ub: list[float] = []
        self._c: list[float] = []
        self._q_rows: list[int] = []
        self._q_cols: list[int] = []
        self._q_vals: list[float] = []
        self._eq = _Rows()
        self._in = _Rows()
        self._constant = 0.0

    @property
    def n(self) -> int:
        return len(self._names)

    # ── variables ───────────────────────────────────────────────────────

    def add_variables(
        self,
        prefix: str,
        count: int,
        lb: float | Sequence[float] = 0.0,
        ub: float | Sequence[float] = np.inf,
        labels: Optional[Iterable[str]] = None,
    ) -> np.ndarray:
        """Append ``count`` variables and return their indices."""
        start = self.n
        labels = list(labels) if labels is not None else [f"{prefix}[{k}]" for k in range(count)]
        if len(labels) != count:
            raise InputValidationError(f"{prefix}: {len(labels)} labels for {count} variables.")
        lbs = np.broadcast_to(np.asarray(lb, dtype=float), (count,))
        ubs = np.broadcast_to(np.asarray(ub, dtype=float), (count,))
        self._names.extend(labels)
        self._lb.extend(lbs.tolist())
        self._ub.extend(ubs.tolist())
        self._c.extend([0.0] * count)
        return np.arange(start, start + count)

    def fix(self, index: int, value: float) -> None:
        self._lb[index] = value
        self._ub[index] = value

    # ── rows ────────────────────────────────────────────────────────────

    def add_equality(self, cols: Sequence[int], coefs: Sequence[float], rhs: float, label: str = "") -> int:
        return self._eq.add(cols, coefs, rhs, label)

    def add_inequality(self, cols: Sequence[int], coefs: Sequence[float], rhs: float, label: str = "") -> int:
        """Add the row ``Σ coefs·x[cols] <= rhs``."""
        return self._in.add(cols, coefs, rhs, label)

    def add_range(
        self, cols: Sequence[int], coefs: Sequence[float], lo: float, hi: float, label: str = ""
    ) -> None:
        """Add ``lo <= Σ coefs·x[cols] <= hi`` as two inequality rows (infinite sides skipped)."""
        if np.isfinite(hi):
            self._in.add(cols, coefs, hi, f"{label}:hi")
        if np.isfinite(lo):
            self._in.add(cols, [-v for v in coefs], -lo, f"{label}:lo")

    # ── cost ────────────────────────────────────────────────────────────

    def add_linear_cost(self, cols: Sequence[int], coefs: Sequence[float]) -> None:
        for col, coef in zip(cols, coefs):
            self._c[int(col)] += float(coef)

    def add_diagonal_quadratic(self, cols: Sequence[int], diag: Sequence[float]) -> None:
        """Add ``½ Σ diag_k x_k²``."""
        for col, d in zip(cols, diag):
            if d < 0:
                raise InputValidationError(f"Negative curvature {d} on {self._names[int(col)]}.")
            self._q_rows.append(int(col))
            self._q_cols.append(int(col))
            self._q_vals.append(float(d))

    def add_square(
        self, cols: Sequence[int], coefs: Sequence[float], offset: float = 0.0, weight: float = 1.0
    ) -> None:
        """Add ``weight·(Σ coefs·x[cols] − offset)²``; convex whenever weight >= 0."""
        if weight < 0:
            raise InputValidationError(f"Square term weight must be nonnegative, got {weight}.")
        if weight == 0.0:
            return
        a = np.asarray(coefs, dtype=float)
        cols = [int(col) for col in cols]
        for p, col_p in enumerate(cols):
            for q, col_q in enumerate(cols):
                self._q_rows.append(col_p)
                self._q_cols.append(col_q)
                self._q_vals.append(2.0 * weight * a[p] * a[q])
            self._c[col_p] += -2.0 * weight * offset * a[p]
        self._constant += weight * offset * offset

    def add_constant(self, value: float) -> None:
        self._constant += float(value)

    # ── output ──────────────────────────────────────────────────────────

    def build(self) -> ConvexProgram:
        n = self.n
        Q = sp.csc_matrix(
            (np.asarray(self._q_vals, dtype=float),
             (np.asarray(self._q_rows, dtype=int), np.asarray(self._q_cols, dtype=int))),
            shape=(n, n),
        )
        Q.sum_duplicates()
        program = ConvexProgram(
            Q=Q,
            c=np.asarray(self._c, dtype=float),
            A_eq=self._eq.matrix(n),
            b_eq=np.asarray(self._eq.rhs, dtype=float),
            A_in=self._in.matrix(n),
            b_in=np.asarray(self._in.rhs, dtype=float),
            lb=np.asarray(self._lb, dtype=float),
            ub=np.asarray(self._ub, dtype=float),
            names=tuple(self._names),
            eq_labels=tuple(self._eq.labels),
            in_labels=tuple(self._in.labels),
            constant=self._constant,
        )
        logger.debug(
            "Built program: %d variables, %d equalities, %d inequalities, nnz(Q)=%d",
            n, program.num_eq, program.num_in, Q.nnz,
        )
        return program


# ─── Results ────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class IterateRecord:
    """One interior-point iterate, in the caller's (unscaled) units."""

    iteration: int
    primal_objective: float
    dual_objective: float
    gap: float
    primal_residual: float
    dual_residual: float
    mu: float
    step: float


@dataclass(frozen=True)
class FarkasCertificate:
    """
    Multipliers proving the constraint set empty::

        A_eqᵀy + A_inᵀz_in − z_lb + z_ub = 0        (up to ``residual``)
        b_eqᵀy + b_inᵀz_in − lbᵀz_lb + ubᵀz_ub = −1
        z_in, z_lb, z_ub >= 0
    """

    y_eq: np.ndarray
    z_in: np.ndarray
    z_lb: np.ndarray
    z_ub: np.ndarray
    residual: float


@dataclass
class Solution:
    x: np.ndarray
    y_eq: np.ndarray
    z_in: np.ndarray
    z_lb: np.ndarray
    z_ub: np.ndarray
    objective: float
    status: SolveStatus
    iterations: int = 0
    history: list[IterateRecord] = field(default_factory=list)
    certificate: Optional[FarkasCertificate] = None
    solve_time: float = 0.0

    @property
    def is_optimal(self) -> bool:
        return self.status == SolveStatus.OPTIMAL

    @classmethod
    def primal_only(cls, program: ConvexProgram, x: np.ndarray) -> "Solution":
        """Wrap a primal point with zero multipliers (for residual checks)."""
        x = np.asarray(x, dtype=float)
        return cls(
            x=x,
            y_eq=np.zeros(program.num_eq),
            z_in=np.zeros(program.num_in),
            z_lb=np.zeros(program.n),
            z_ub=np.zeros(program.n),
            objective=program.objective(x),
            status=SolveStatus.MAX_ITER,
        )
