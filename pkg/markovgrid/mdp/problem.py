"""
Finite-horizon constrained MDP problems.

A problem is an initial distribution ρ̄, a horizon T, a convex cost over the
marginals ρ^1..ρ^T and joints M^0..M^{T-1}, and a list of tractable
constraints.  Costs and convex constraints are restricted to affine terms
plus weighted squares of affine terms, so every emitted program is a QP.

JSON document::

    {"N": 2, "T": 1, "rho0": [1, 0],
     "cost": {"linear": [...], "squares": [{"weight": 1, "terms": [...], "offset": 0.3}]},
     "constraints": [{"form": "linear_column", "t": 0, "j": 0, "alpha": [-1, 0], "beta": -0.5}],
     "allowed": [[0, 0], [1, 0], [1, 1]]}
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..errors import InputValidationError
from ..schemas import ConstraintDoc, ExpressionDoc, LinearTermDoc, MdpProblemDoc, SquareTermDoc
from .enums import ConstraintForm, VariableKind

logger = logging.getLogger(__name__)


# ─── Expressions ────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class VariableRef:
    """ρ^t_i (``j`` is None) or M^t_(i,j)."""

    kind: VariableKind
    t: int
    i: int
    j: Optional[int] = None

    @classmethod
    def rho(cls, t: int, i: int) -> "VariableRef":
        return cls(VariableKind.RHO, t, i)

    @classmethod
    def joint(cls, t: int, i: int, j: int) -> "VariableRef":
        return cls(VariableKind.M, t, i, j)

    @classmethod
    def parse(cls, raw: Sequence) -> "VariableRef":
        if not raw:
            raise InputValidationError("Empty variable reference.")
        kind = str(raw[0])
        try:
            if kind == VariableKind.RHO.value and len(raw) == 3:
                return cls.rho(int(raw[1]), int(raw[2]))
            if kind == VariableKind.M.value and len(raw) == 4:
                return cls.joint(int(raw[1]), int(raw[2]), int(raw[3]))
        except (TypeError, ValueError):
            pass
        raise InputValidationError(f"Malformed variable reference {list(raw)!r}.")

    def to_list(self) -> list:
        if self.kind == VariableKind.RHO:
            return [self.kind.value, self.t, self.i]
        return [self.kind.value, self.t, self.i, self.j]

    def __str__(self) -> str:
        if self.kind == VariableKind.RHO:
            return f"rho[{self.t}][{self.i}]"
        return f"M[{self.t}][{self.i},{self.j}]"


@dataclass(frozen=True)
class SquareTerm:
    """weight · (Σ coef·var − offset)²"""

    weight: float
    terms: tuple[tuple[VariableRef, float], ...]
    offset: float = 0.0


@dataclass(frozen=True)
class ConvexExpression:
    linear: tuple[tuple[VariableRef, float], ...] = ()
    squares: tuple[SquareTerm, ...] = ()
    constant: float = 0.0

    @property
    def is_affine(self) -> bool:
        return not self.squares

    def variables(self) -> list[VariableRef]:
        refs = [ref for ref, _ in self.linear]
        for square in self.squares:
            refs.extend(ref for ref, _ in square.terms)
        return refs

    def evaluate(self, rho: Sequence[np.ndarray], joints: Sequence[np.ndarray] = ()) -> float:
        """Value at a trajectory (``rho[t]`` vectors, ``joints[t]`` N×N matrices)."""

        def value(ref: VariableRef) -> float:
            if ref.kind == VariableKind.RHO:
                return float(rho[ref.t][ref.i])
            return float(joints[ref.t][ref.i, ref.j])

        total = self.constant + sum(coef * value(ref) for ref, coef in self.linear)
        for square in self.squares:
            inner = sum(coef * value(ref) for ref, coef in square.terms) - square.offset
            total += square.weight * inner * inner
        return float(total)

    # ── (de)serialization ───────────────────────────────────────────────

    @classmethod
    def from_doc(cls, doc: ExpressionDoc) -> "ConvexExpression":
        return cls(
            linear=tuple((VariableRef.parse(term.var), term.coef) for term in doc.linear),
            squares=tuple(
                SquareTerm(
                    weight=sq.weight,
                    terms=tuple((VariableRef.parse(term.var), term.coef) for term in sq.terms),
                    offset=sq.offset,
                )
                for sq in doc.squares
            ),
            constant=doc.constant,
        )

    def to_doc(self) -> ExpressionDoc:
        return ExpressionDoc(
            linear=[LinearTermDoc(var=ref.to_list(), coef=coef) for ref, coef in self.linear],
            squares=[
                SquareTermDoc(
                    weight=sq.weight,
                    terms=[LinearTermDoc(var=ref.to_list(), coef=coef) for ref, coef in sq.terms],
                    offset=sq.offset,
                )
                for sq in self.squares
            ],
            constant=self.constant,
        )


# ─── Constraints ────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class TractableConstraint:
    """
    ``LINEAR_COLUMN``: Σ_i alpha_i Π^t_(i,j) − beta <= 0 on column j of step t.
    ``CONVEX_RHO`` / ``CONVEX_JOINT``: ``expression`` <= 0.
    """

    form: ConstraintForm
    t: Optional[int] = None
    j: Optional[int] = None
    alpha: Optional[tuple[float, ...]] = None
    beta: Optional[float] = None
    expression: Optional[ConvexExpression] = None

    @classmethod
    def linear_column(cls, t: int, j: int, alpha: Sequence[float], beta: float) -> "TractableConstraint":
        return cls(ConstraintForm.LINEAR_COLUMN, t=t, j=j, alpha=tuple(float(a) for a in alpha), beta=float(beta))

    @classmethod
    def column_equality(
        cls, t: int, j: int, alpha: Sequence[float], beta: float
    ) -> list["TractableConstraint"]:
        """Σ alpha_i Π^t_(i,j) = beta, encoded as the paired inequalities."""
        return [
            cls.linear_column(t, j, alpha, beta),
            cls.linear_column(t, j, [-a for a in alpha], -beta),
        ]

    @classmethod
    def entry_bound(cls, t: int, i: int, j: int, N: int, value: float, lower: bool) -> "TractableConstraint":
        """Π^t_(i,j) >= value (``lower``) or Π^t_(i,j) <= value."""
        alpha = np.zeros(N)
        alpha[i] = -1.0 if lower else 1.0
        return cls.linear_column(t, j, alpha, -value if lower else value)

    @classmethod
    def from_doc(cls, doc: ConstraintDoc) -> "TractableConstraint":
        form = ConstraintForm(doc.form.value)
        if form == ConstraintForm.LINEAR_COLUMN:
            missing = [name for name in ("t", "j", "alpha", "beta") if getattr(doc, name) is None]
            if missing:
                raise InputValidationError(f"linear_column constraint is missing {', '.join(missing)}.")
            return cls.linear_column(doc.t, doc.j, doc.alpha, doc.beta)
        if doc.expr is None:
            raise InputValidationError(f"{form.value} constraint requires an 'expr' payload.")
        return cls(form, expression=ConvexExpression.from_doc(doc.expr))

    def to_doc(self) -> ConstraintDoc:
        if self.form == ConstraintForm.LINEAR_COLUMN:
            return ConstraintDoc(form=self.form.value, t=self.t, j=self.j, alpha=list(self.alpha), beta=self.beta)
        return ConstraintDoc(form=self.form.value, expr=self.expression.to_doc())


# ─── Problem ────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class MdpProblem:
    num_states: int
    horizon: int
    initial_distribution: np.ndarray
    cost: ConvexExpression = field(default_factory=ConvexExpression)
    constraints: tuple[TractableConstraint, ...] = ()
    allowed: Optional[np.ndarray] = None   # N×N bool, allowed[i, j] permits j -> i

    @property
    def pattern(self) -> np.ndarray:
        if self.allowed is None:
            return np.ones((self.num_states, self.num_states), dtype=bool)
        return np.asarray(self.allowed, dtype=bool)

    def linear_column_constraints(self) -> list[TractableConstraint]:
        return [con for con in self.constraints if con.form == ConstraintForm.LINEAR_COLUMN]

    @classmethod
    def from_doc(cls, doc: MdpProblemDoc) -> "MdpProblem":
        allowed = None
        if doc.allowed is not None:
            allowed = np.zeros((doc.N, doc.N), dtype=bool)
            for pair in doc.allowed:
                if len(pair) != 2 or not all(0 <= k < doc.N for k in pair):
                    raise InputValidationError(f"Allowed transition {pair!r} is not an [i, j] pair in range.")
                allowed[pair[0], pair[1]] = True
        return cls(
            num_states=doc.N,
            horizon=doc.T,
            initial_distribution=np.asarray(doc.rho0, dtype=float),
            cost=ConvexExpression.from_doc(doc.cost),
            constraints=tuple(TractableConstraint.from_doc(con) for con in doc.constraints),
            allowed=allowed,
        )

    def to_doc(self) -> MdpProblemDoc:
        allowed = None
        if self.allowed is not None:
            allowed = [[int(i), int(j)] for i, j in zip(*np.nonzero(self.allowed))]
        return MdpProblemDoc(
            N=self.num_states,
            T=self.horizon,
            rho0=[float(v) for v in self.initial_distribution],
            cost=self.cost.to_doc(),
            constraints=[con.to_doc() for con in self.constraints],
            allowed=allowed,
        )


def load_problem(path: str | Path) -> MdpProblem:
    """Parse an MDP problem document (raises pydantic/JSON errors on malformed input)."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    problem = MdpProblem.from_doc(MdpProblemDoc.model_validate(raw))
    logger.info("Loaded MDP problem %s: N=%d T=%d, %d constraints",
                path, problem.num_states, problem.horizon, len(problem.constraints))
    return problem


def dump_problem(problem: MdpProblem, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(problem.to_doc().model_dump_json(indent=2, exclude_none=True), encoding="utf-8")
    return path
