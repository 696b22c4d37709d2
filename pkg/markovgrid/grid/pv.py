"""
PV inverter capability set as linear rows.

The disk p² + q² <= S² is replaced by the regular m-gon inscribed in it with
vertices at angles 2πk/m; edge k has outward normal at angle (2k+1)π/m and
lies at distance S·cos(π/m) from the origin.  Together with 0 <= p <= P̄
the rows are A·(p, q) <= b.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..config import settings
from ..errors import InputValidationError

POLYTOPE_TOL = 1e-12


@dataclass(frozen=True)
class PvPolytope:
    A: np.ndarray          # rows × 2
    b: np.ndarray
    rating: float
    segments: int

    def contains(self, p: float, q: float, tol: float = POLYTOPE_TOL) -> bool:
        return bool(np.all(self.A @ np.array([p, q]) <= self.b + tol))

    def vertices(self) -> np.ndarray:
        """Vertices of the m-gon (the disk part, before the p bounds)."""
        angles = 2.0 * np.pi * np.arange(self.segments) / self.segments
        return self.rating * np.column_stack([np.cos(angles), np.sin(angles)])


def pv_constraint_polytope(S: float, p_avail: float, m: int | None = None) -> PvPolytope:
    m = settings.PV_SEGMENTS if m is None else m
    if S <= 0:
        raise InputValidationError(f"PV rating must be positive, got {S}.")
    if m < 4:
        raise InputValidationError(f"Need at least 4 segments for the PV disk, got {m}.")
    if p_avail < 0:
        raise InputValidationError(f"Available PV power must be nonnegative, got {p_avail}.")
    mids = (2.0 * np.arange(m) + 1.0) * np.pi / m
    disk_A = np.column_stack([np.cos(mids), np.sin(mids)])
    disk_b = np.full(m, S * np.cos(np.pi / m))
    A = np.vstack([disk_A, [[1.0, 0.0], [-1.0, 0.0]]])
    b = np.concatenate([disk_b, [p_avail, 0.0]])
    return PvPolytope(A=A, b=b, rating=S, segments=m)
