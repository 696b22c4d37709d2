"""
Primal-dual interior-point solver (Mehrotra predictor-corrector).

The program is brought to the standard form

    minimize ½ xᵀQx + cᵀx   s.t.  A x = b,  G x + s = h,  s >= 0

where G stacks the general inequality rows and the finite variable bounds,
and fixed variables (lb == ub) become equality rows.  Each iteration factors
the regularized quasi-definite KKT matrix

    [ Q + Gᵀ W G + δI    Aᵀ  ]
    [ A                 −δI  ]        W = diag(z / s)

once with SuperLU (threshold partial pivoting) and reuses it for the
predictor and corrector solves, with a few rounds of iterative refinement
against the unregularized matrix.  A failed factorization is retried with a
larger regularization, up to REG_CEILING.  The rows of A and G are scaled to
unit max-norm before the first iteration and the multipliers are mapped back.

Infeasibility is declared only after an elastic phase-1 LP confirms a
positive minimum violation; its multipliers are returned as the Farkas
certificate.
"""
from __future__ import annotations

import logging
import time
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from ..errors import InputValidationError
from .kkt import KktReport, verify_kkt
from .program import (
    ConvexProgram,
    FarkasCertificate,
    IterateRecord,
    Solution,
    SolveStatus,
    SolverConfig,
)

logger = logging.getLogger(__name__)

STEP_FRACTION = 0.99
STALL_STEP = 1e-10
STALL_LIMIT = 5
UNBOUNDED_NORM = 1e8
PHASE1_VIOLATION = 1e-6
PIVOT_THRESHOLD = 0.1
REG_GROWTH = 100.0
REG_CEILING = 1e-4
W_CEILING = 1e14


class _FactorizationError(RuntimeError):
    pass


def _norm(v: np.ndarray) -> float:
    return float(np.max(np.abs(v))) if v.size else 0.0


def _row_scale(matrix: sp.csr_matrix) -> np.ndarray:
    """1 / max-norm of every row; empty rows keep 1."""
    peak = np.asarray(abs(matrix).max(axis=1).todense()).ravel() if matrix.shape[0] else np.zeros(0)
    return np.where(peak > 0.0, 1.0 / np.where(peak > 0.0, peak, 1.0), 1.0)


def _max_step(v: np.ndarray, dv: np.ndarray) -> float:
    """Largest α in (0, ∞] keeping v + α·dv >= 0."""
    neg = dv < 0
    if not np.any(neg):
        return np.inf
    return float(np.min(-v[neg] / dv[neg]))


# ─── PSD check ──────────────────────────────────────────────────────────────

def is_positive_semidefinite(Q: sp.spmatrix, reg: float = 1e-9) -> bool:
    """
    Check Q ⪰ 0 via the signs of the diagonal pivots of a symmetric
    factorization of Q + reg·I (Sylvester's law of inertia).
    """
    Q = sp.csc_matrix(Q)
    if Q.nnz == 0:
        return True
    scale = max(1.0, float(abs(Q).max()))
    offdiag = Q - sp.diags(Q.diagonal())
    if offdiag.count_nonzero() == 0:
        return bool(np.all(Q.diagonal() >= -reg * scale))
    shifted = (Q + reg * scale * sp.identity(Q.shape[0], format="csc")).tocsc()
    try:
        lu = splu(shifted, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                  options=dict(SymmetricMode=True))
    except RuntimeError:
        return False
    pivots = lu.U.diagonal()
    return bool(np.all(pivots > -1e-10 * scale))


# ─── KKT system ─────────────────────────────────────────────────────────────

class _KktSystem:
    """One factorization of the regularized reduced KKT matrix."""

    def __init__(
        self,
        Q: sp.csc_matrix,
        A: sp.csr_matrix,
        G: sp.csr_matrix,
        w: np.ndarray,
        primal_reg: float,
        dual_reg: float,
        refinement_steps: int,
    ) -> None:
        n, p = Q.shape[0], A.shape[0]
        H = Q.tocsc()
        if G.shape[0]:
            H = (H + G.T @ sp.diags(w) @ G).tocsc()
        if p:
            self._K0 = sp.bmat([[H, A.T], [A, None]], format="csc")
        else:
            self._K0 = H
        self._n = n
        self._p = p
        self._refinement_steps = refinement_steps

        sign = np.concatenate([np.ones(n), -np.ones(p)])
        reg = np.concatenate([np.full(n, primal_reg), np.full(p, -dual_reg)])
        while True:
            K = (self._K0 + sp.diags(reg)).tocsc()
            try:
                self._lu = splu(K, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=PIVOT_THRESHOLD)
                break
            except RuntimeError:
                if _norm(reg) >= REG_CEILING:
                    raise _FactorizationError("KKT matrix could not be factored.")
                reg = np.where(reg == 0.0, sign * REG_CEILING * 1e-8, reg)
                reg = np.clip(reg * REG_GROWTH, -REG_CEILING, REG_CEILING)
                logger.debug("KKT factorization failed; regularization raised to %.1e", _norm(reg))

    def solve(self, r1: np.ndarray, r2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        rhs = np.concatenate([r1, r2])
        sol = self._lu.solve(rhs)
        best = _norm(rhs - self._K0 @ sol)
        for _ in range(self._refinement_steps):
            candidate = sol + self._lu.solve(rhs - self._K0 @ sol)
            residual = _norm(rhs - self._K0 @ candidate)
            if not residual < best:
                break
            sol, best = candidate, residual
        return sol[: self._n], sol[self._n:]


# ─── Solver ─────────────────────────────────────────────────────────────────

class InteriorPointSolver:
    """
    Solve one ``ConvexProgram``.

    Usage::

        solution = InteriorPointSolver(program, SolverConfig(tol=1e-9)).solve()
    """

    def __init__(
        self,
        program: ConvexProgram,
        config: Optional[SolverConfig] = None,
        allow_phase1: bool = True,
    ) -> None:
        self.program = program
        self.config = config or SolverConfig()
        self.allow_phase1 = allow_phase1

        n = program.n
        fixed = np.isfinite(program.lb) & (program.lb == program.ub)
        self._fix_idx = np.flatnonzero(fixed)
        self._lb_idx = np.flatnonzero(np.isfinite(program.lb) & ~fixed)
        self._ub_idx = np.flatnonzero(np.isfinite(program.ub) & ~fixed)

        eye = sp.identity(n, format="csr")
        self.A = sp.vstack([program.A_eq, eye[self._fix_idx]], format="csr")
        self.b = np.concatenate([program.b_eq, program.lb[self._fix_idx]])
        self.G = sp.vstack([program.A_in, -eye[self._lb_idx], eye[self._ub_idx]], format="csr")
        self.h = np.concatenate([program.b_in, -program.lb[self._lb_idx], program.ub[self._ub_idx]])
        self._row_a = _row_scale(self.A)
        self._row_g = _row_scale(self.G)
        self.A = (sp.diags(self._row_a) @ self.A).tocsr()
        self.b = self.b * self._row_a
        self.G = (sp.diags(self._row_g) @ self.G).tocsr()
        self.h = self.h * self._row_g

        q_max = float(abs(program.Q).max()) if program.Q.nnz else 0.0
        self.scale = max(1.0, _norm(program.c), q_max)
        self.Q = (program.Q / self.scale).tocsc()
        self.c = program.c / self.scale

    # ── helpers ─────────────────────────────────────────────────────────

    def _split_duals(self, y: np.ndarray, z: np.ndarray) -> tuple[np.ndarray, ...]:
        """Map standard-form multipliers back onto the program's rows and bounds."""
        y = y * self._row_a
        z = z * self._row_g
        p, m_in = self.program.num_eq, self.program.num_in
        n_lb = self._lb_idx.size
        y_eq = y[:p]
        y_fix = y[p:]
        z_in = z[:m_in]
        z_lb = np.zeros(self.program.n)
        z_ub = np.zeros(self.program.n)
        z_lb[self._lb_idx] = z[m_in:m_in + n_lb]
        z_ub[self._ub_idx] = z[m_in + n_lb:]
        z_ub[self._fix_idx] = np.maximum(y_fix, 0.0)
        z_lb[self._fix_idx] = np.maximum(-y_fix, 0.0)
        return y_eq, z_in, z_lb, z_ub

    def _candidate(self, x, y, z, status, iterations, history, started) -> Solution:
        y_eq, z_in, z_lb, z_ub = self._split_duals(y * self.scale, z * self.scale)
        return Solution(
            x=x.copy(),
            y_eq=y_eq,
            z_in=z_in,
            z_lb=z_lb,
            z_ub=z_ub,
            objective=self.program.objective(x),
            status=status,
            iterations=iterations,
            history=history,
            solve_time=time.perf_counter() - started,
        )

    def _initial_point(self) -> tuple[np.ndarray, ...]:
        m = self.G.shape[0]
        system = _KktSystem(self.Q, self.A, self.G, np.ones(m), 1.0, self.config.regularization, 0)
        x, y = system.solve(-self.c + self.G.T @ self.h, self.b)
        s = np.maximum(self.h - self.G @ x, 1.0)
        z = np.ones(m)
        return x, y, s, z

    # ── main loop ───────────────────────────────────────────────────────

    def solve(self) -> Solution:
        started = time.perf_counter()
        cfg = self.config
        program = self.program
        if not is_positive_semidefinite(program.Q, cfg.regularization):
            raise InputValidationError("Quadratic cost matrix Q is not positive semidefinite.")

        Q, c, A, b, G, h = self.Q, self.c, self.A, self.b, self.G, self.h
        m = G.shape[0]
        bound_scale = 1.0 + max(_norm(b), _norm(h))
        x, y, s, z = self._initial_point()

        history: list[IterateRecord] = []
        status: Optional[SolveStatus] = None
        suspect_infeasible = False
        stalls = 0
        alpha = 0.0
        iteration = 0

        for iteration in range(cfg.max_iter + 1):
            rd = Q @ x + c + A.T @ y + G.T @ z
            rp = A @ x - b
            rg = G @ x + s - h
            mu = float(s @ z) / m if m else 0.0

            candidate = self._candidate(x, y, z, SolveStatus.OPTIMAL, iteration, history, started)
            report: KktReport = verify_kkt(program, candidate, cfg.tol)
            dual_obj = self.scale * float(-0.5 * x @ (Q @ x) - b @ y - h @ z) + program.constant
            history.append(IterateRecord(
                iteration=iteration,
                primal_objective=candidate.objective,
                dual_objective=dual_obj,
                gap=candidate.objective - dual_obj,
                primal_residual=max(report.equality, report.inequality),
                dual_residual=report.stationarity,
                mu=mu,
                step=alpha,
            ))
            logger.debug(
                "ipm it=%d pobj=%.6e dobj=%.6e pres=%.2e dres=%.2e comp=%.2e mu=%.2e",
                iteration, candidate.objective, dual_obj, history[-1].primal_residual,
                report.stationarity, report.complementarity, mu,
            )
            if report.passed:
                status = SolveStatus.OPTIMAL
                break
            if iteration == cfg.max_iter:
                break

            # Dual ray: Aᵀy + Gᵀz → 0 relative to a growing −(bᵀy + hᵀz)
            farkas_denominator = -float(b @ y + h @ z)
            if farkas_denominator > 0.0:
                ratio = _norm(A.T @ y + G.T @ z) / farkas_denominator
                if ratio <= cfg.infeasibility_tol:
                    suspect_infeasible = True
                    break
            if _norm(x) > UNBOUNDED_NORM * bound_scale:
                status = SolveStatus.UNBOUNDED
                break

            try:
                w = np.minimum(z / s, W_CEILING) if m else np.zeros(0)
                system = _KktSystem(Q, A, G, w, cfg.regularization, cfg.regularization, cfg.refinement_steps)
            except _FactorizationError:
                logger.warning("Interior-point iteration %d: KKT factorization failed at the regularization ceiling",
                               iteration)
                break

            def direction(rc: np.ndarray) -> tuple[np.ndarray, ...]:
                correction = (z * rg - rc) / s if m else np.zeros(0)
                dx, dy = system.solve(-rd - G.T @ correction, -rp)
                Gdx = G @ dx
                dz = w * Gdx + correction
                ds = -rg - Gdx
                return dx, dy, ds, dz

            # Predictor
            dx_a, dy_a, ds_a, dz_a = direction(s * z)
            if m:
                alpha_aff = min(1.0, _max_step(s, ds_a), _max_step(z, dz_a))
                mu_aff = float((s + alpha_aff * ds_a) @ (z + alpha_aff * dz_a)) / m
                sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0
                # Corrector
                dx, dy, ds, dz = direction(s * z + ds_a * dz_a - sigma * mu)
                alpha = min(1.0, STEP_FRACTION * min(_max_step(s, ds), _max_step(z, dz)))
            else:
                dx, dy, ds, dz = dx_a, dy_a, ds_a, dz_a
                alpha = 1.0

            x = x + alpha * dx
            y = y + alpha * dy
            s = s + alpha * ds
            z = z + alpha * dz

            if alpha < STALL_STEP:
                stalls += 1
                logger.warning("Interior-point step %.2e at iteration %d", alpha, iteration)
                if stalls >= STALL_LIMIT:
                    break
            else:
                stalls = 0

        certificate = None
        if status is None:
            if self.allow_phase1:
                certificate = self._phase1_certificate()
            if certificate is not None:
                status = SolveStatus.INFEASIBLE
            else:
                if suspect_infeasible:
                    logger.warning("Dual divergence without a confirmed infeasibility certificate")
                status = SolveStatus.MAX_ITER

        solution = self._candidate(x, y, z, status, iteration, history, started)
        solution.certificate = certificate
        logger.info(
            "QP (%d vars, %d eq, %d in) finished: status=%s iterations=%d objective=%.6e time=%.3fs",
            program.n, program.num_eq, program.num_in, status.value, iteration,
            solution.objective, solution.solve_time,
        )
        return solution

    # ── infeasibility certificate ───────────────────────────────────────

    def _phase1_certificate(self) -> Optional[FarkasCertificate]:
        """
        Minimize the total constraint violation

            min 1ᵀe⁺ + 1ᵀe⁻ + 1ᵀw   s.t.  A x + e⁺ − e⁻ = b,  G x − w <= h,  e, w >= 0

        and turn its multipliers into a Farkas certificate when the minimum is positive.
        """
        n, p, m = self.program.n, self.A.shape[0], self.G.shape[0]
        if p + m == 0:
            return None
        eye_p = sp.identity(p, format="csr")
        eye_m = sp.identity(m, format="csr")
        A1 = sp.hstack([self.A, eye_p, -eye_p, sp.csr_matrix((p, m))], format="csr")
        G1 = sp.hstack([self.G, sp.csr_matrix((m, 2 * p)), -eye_m], format="csr")
        n1 = n + 2 * p + m
        phase1 = ConvexProgram(
            Q=sp.csc_matrix((n1, n1)),
            c=np.concatenate([np.zeros(n), np.ones(2 * p + m)]),
            A_eq=A1,
            b_eq=self.b,
            A_in=G1,
            b_in=self.h,
            lb=np.concatenate([np.full(n, -np.inf), np.zeros(2 * p + m)]),
            ub=np.full(n1, np.inf),
        )
        result = InteriorPointSolver(phase1, self.config, allow_phase1=False).solve()
        if result.status != SolveStatus.OPTIMAL:
            logger.warning("Phase-1 problem ended with status %s", result.status.value)
            return None
        threshold = max(PHASE1_VIOLATION, 1e3 * self.config.tol) * (1.0 + max(_norm(self.b), _norm(self.h)))
        if result.objective <= threshold:
            return None

        y1, z1 = result.y_eq, result.z_in
        denominator = -float(self.b @ y1 + self.h @ z1)
        if denominator <= 0.0:
            return None
        y1 = y1 / denominator
        z1 = np.maximum(z1 / denominator, 0.0)
        residual = _norm(self.A.T @ y1 + self.G.T @ z1)
        y_eq, z_in, z_lb, z_ub = self._split_duals(y1, z1)
        logger.info("Infeasibility confirmed: minimum violation %.3e, certificate residual %.2e",
                    result.objective, residual)
        return FarkasCertificate(y_eq=y_eq, z_in=z_in, z_lb=z_lb, z_ub=z_ub, residual=residual)


def solve(program: ConvexProgram, config: Optional[SolverConfig] = None) -> Solution:
    """Solve ``program``; see ``InteriorPointSolver``."""
    return InteriorPointSolver(program, config).solve()
