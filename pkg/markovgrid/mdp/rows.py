"""Linear rows shared by the feasibility gate and the convexifier."""
from __future__ import annotations

from dataclasses import dataclass

from ..solver import ProgramBuilder


@dataclass(frozen=True)
class LinearRow:
    """Σ coefs[col]·x[col] <= rhs (or == rhs when ``equality``)."""

    coefs: tuple[tuple[int, float], ...]
    rhs: float
    label: str
    equality: bool = False

    @classmethod
    def make(cls, coefs: dict[int, float], rhs: float, label: str) -> "LinearRow":
        merged = tuple(sorted((col, val) for col, val in coefs.items() if val != 0.0))
        return cls(merged, float(rhs), label)

    def key(self) -> tuple:
        return self.coefs, self.rhs

    def negated_key(self) -> tuple:
        return tuple((col, -val) for col, val in self.coefs), -self.rhs


def pair_inequalities(rows: list[LinearRow]) -> list[LinearRow]:
    """
    Collapse every pair of rows a·x <= b, −a·x <= −b into one equality row.
    Unpaired rows are returned unchanged, order preserved.
    """
    open_rows: dict[tuple, list[int]] = {}
    result: list[LinearRow] = []
    for row in rows:
        partners = open_rows.get(row.negated_key())
        if partners:
            k = partners.pop()
            first = result[k]
            result[k] = LinearRow(first.coefs, first.rhs, first.label, equality=True)
            continue
        open_rows.setdefault(row.key(), []).append(len(result))
        result.append(row)
    return result


def emit_rows(builder: ProgramBuilder, rows: list[LinearRow]) -> None:
    for row in rows:
        cols = [col for col, _ in row.coefs]
        vals = [val for _, val in row.coefs]
        if row.equality:
            builder.add_equality(cols, vals, row.rhs, row.label)
        else:
            builder.add_inequality(cols, vals, row.rhs, row.label)
