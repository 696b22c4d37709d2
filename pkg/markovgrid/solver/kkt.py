"""
KKT residual certification.

Every residual is reported twice: as an absolute max-norm and relative to
``1 + largest term`` in the same equation, so a program whose objective is
scaled by 1e6 can still be certified at a fixed tolerance.  The verdict uses
the relative values.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..config import settings
from .program import ConvexProgram, Solution


def _norm(v: np.ndarray) -> float:
    return float(np.max(np.abs(v))) if v.size else 0.0


@dataclass(frozen=True)
class KktReport:
    stationarity: float
    equality: float
    inequality: float
    complementarity: float
    dual_sign: float
    stationarity_abs: float
    equality_abs: float
    inequality_abs: float
    complementarity_abs: float
    tol: float

    @property
    def passed(self) -> bool:
        return max(
            self.stationarity, self.equality, self.inequality, self.complementarity, self.dual_sign
        ) <= self.tol

    @property
    def worst(self) -> float:
        return max(self.stationarity, self.equality, self.inequality, self.complementarity, self.dual_sign)

    def as_dict(self) -> dict:
        return {
            "stationarity": self.stationarity,
            "equality": self.equality,
            "inequality": self.inequality,
            "complementarity": self.complementarity,
            "dual_sign": self.dual_sign,
            "stationarity_abs": self.stationarity_abs,
            "equality_abs": self.equality_abs,
            "inequality_abs": self.inequality_abs,
            "complementarity_abs": self.complementarity_abs,
            "tol": self.tol,
            "passed": self.passed,
        }


def verify_kkt(program: ConvexProgram, solution: Solution, tol: float = settings.SOLVER_TOL) -> KktReport:
    """Measure how far ``solution`` is from satisfying the KKT conditions of ``program``."""
    x = np.asarray(solution.x, dtype=float)
    lb_mask = np.isfinite(program.lb)
    ub_mask = np.isfinite(program.ub)
    z_lb = np.where(lb_mask, solution.z_lb, 0.0)
    z_ub = np.where(ub_mask, solution.z_ub, 0.0)

    Qx = program.Q @ x
    Aty = program.A_eq.T @ solution.y_eq
    Gtz = program.A_in.T @ solution.z_in
    r_stat = Qx + program.c + Aty + Gtz - z_lb + z_ub
    stat_abs = _norm(r_stat)
    stat_scale = 1.0 + max(_norm(Qx), _norm(program.c), _norm(Aty), _norm(Gtz), _norm(z_lb), _norm(z_ub))

    Ax = program.A_eq @ x
    eq_abs = _norm(Ax - program.b_eq)
    eq_scale = 1.0 + max(_norm(Ax), _norm(program.b_eq))

    Gx = program.A_in @ x
    slack_in = program.b_in - Gx
    slack_lb = np.where(lb_mask, x - np.where(lb_mask, program.lb, 0.0), 0.0)
    slack_ub = np.where(ub_mask, np.where(ub_mask, program.ub, 0.0) - x, 0.0)
    in_abs = max(
        _norm(np.maximum(-slack_in, 0.0)),
        _norm(np.maximum(-slack_lb, 0.0)),
        _norm(np.maximum(-slack_ub, 0.0)),
    )
    in_scale = 1.0 + max(
        _norm(Gx), _norm(program.b_in), _norm(program.lb[lb_mask]), _norm(program.ub[ub_mask])
    )

    comp_abs = float(
        np.sum(np.abs(solution.z_in * slack_in))
        + np.sum(np.abs(z_lb * slack_lb))
        + np.sum(np.abs(z_ub * slack_ub))
    )
    # duals carry the cost scale, so the same terms that scale stationarity scale z·s
    comp_scale = 1.0 + max(abs(program.objective(x)), stat_scale - 1.0)

    duals = np.concatenate([solution.z_in, z_lb, z_ub])
    dual_sign = _norm(np.maximum(-duals, 0.0)) / (1.0 + _norm(duals)) if duals.size else 0.0

    return KktReport(
        stationarity=stat_abs / stat_scale,
        equality=eq_abs / eq_scale,
        inequality=in_abs / in_scale,
        complementarity=comp_abs / comp_scale,
        dual_sign=dual_sign,
        stationarity_abs=stat_abs,
        equality_abs=eq_abs,
        inequality_abs=in_abs,
        complementarity_abs=comp_abs,
        tol=tol,
    )
