"""
Newton-Raphson AC power flow in polar coordinates.

Every non-slack node is a PQ node.  The mismatch is S(V) − S_spec with
S(V) = V ∘ conj(Y V); the Jacobian blocks are the usual complex derivatives

    ∂S/∂θ = j·diag(V)·conj(diag(I) − Y·diag(V))
    ∂S/∂|V| = diag(V)·conj(Y·diag(V/|V|)) + conj(diag(I))·diag(V/|V|)

assembled as sparse matrices and solved with ``spsolve``.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from ..config import settings
from ..errors import ConvergenceError, InputValidationError
from .feeder import SLACK, FeederModel, Injections

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PowerFlowSolution:
    voltages: np.ndarray            # complex, every node
    iterations: int
    residual: float                 # max |ΔP|, |ΔQ| over PQ nodes, pu
    p0: float                       # substation import, pu
    q0: float
    losses_p: float
    losses_q: float
    residual_history: list[float] = field(default_factory=list)

    @property
    def v_mag(self) -> np.ndarray:
        return np.abs(self.voltages)

    @property
    def v_angle_deg(self) -> np.ndarray:
        return np.degrees(np.angle(self.voltages))

    @property
    def converged(self) -> bool:
        return bool(np.isfinite(self.residual))


def _mismatch(Y: sp.csr_matrix, V: np.ndarray, s: np.ndarray, pq: np.ndarray) -> np.ndarray:
    mis = V * np.conj(Y @ V) - s
    return np.r_[mis.real[pq], mis.imag[pq]]


def _jacobian(Y: sp.csr_matrix, V: np.ndarray, pq: np.ndarray) -> sp.csc_matrix:
    I = Y @ V
    V_diag = sp.diags(V)
    V_norm = sp.diags(V / np.abs(V))
    I_diag = sp.diags(I)
    dS_dVa = 1j * V_diag @ (I_diag - Y @ V_diag).conj()
    dS_dVm = V_diag @ (Y @ V_norm).conj() + I_diag.conj() @ V_norm
    dS_dVa = sp.csr_matrix(dS_dVa)[pq][:, pq]
    dS_dVm = sp.csr_matrix(dS_dVm)[pq][:, pq]
    return sp.vstack([
        sp.hstack([dS_dVa.real, dS_dVm.real]),
        sp.hstack([dS_dVa.imag, dS_dVm.imag]),
    ]).tocsc()


def _losses(feeder: FeederModel, V: np.ndarray) -> complex:
    total = 0j
    for br in feeder.branches:
        current = (V[br.from_node] - V[br.to_node]) / br.impedance
        total += br.impedance * abs(current) ** 2
    return total


def solve_power_flow(
    feeder: FeederModel,
    injections: Injections,
    tol: Optional[float] = None,
    max_iter: Optional[int] = None,
) -> PowerFlowSolution:
    """
    Solve for nodal voltages from a flat start.

    Raises ``ConvergenceError`` (carrying the residual history) when the
    mismatch is not below ``tol`` after ``max_iter`` Newton steps.
    """
    tol = settings.PF_TOL if tol is None else tol
    max_iter = settings.PF_MAX_ITER if max_iter is None else max_iter
    n = feeder.num_nodes
    if injections.p.size != n:
        raise InputValidationError(f"Injection vector has {injections.p.size} entries for {n} nodes.")

    Y = feeder.ybus()
    s = injections.apparent
    pq = np.arange(1, n)
    Va = np.zeros(n)
    Vm = np.ones(n)
    V = Vm * np.exp(1j * Va)

    history: list[float] = []
    iterations = 0
    while True:
        F = _mismatch(Y, V, s, pq)
        residual = float(np.max(np.abs(F))) if F.size else 0.0
        history.append(residual)
        logger.debug("Power flow iteration %d: residual %.3e", iterations, residual)
        if not np.isfinite(residual) or residual <= tol or iterations >= max_iter:
            break
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            dx = spsolve(_jacobian(Y, V, pq), F)
        Va[pq] -= dx[: pq.size]
        Vm[pq] -= dx[pq.size:]
        V = Vm * np.exp(1j * Va)
        iterations += 1

    if not np.isfinite(residual) or residual > tol:
        logger.info("Power flow on '%s' did not converge: residual %.3e after %d iterations",
                    feeder.name, residual, iterations)
        raise ConvergenceError(
            f"Power flow did not converge after {iterations} iterations (last residual {residual:.3e} pu).",
            residual_history=history,
            context={"iterations": iterations, "residual": residual},
        )

    S_slack = V[SLACK] * np.conj((Y @ V)[SLACK])
    losses = _losses(feeder, V)
    return PowerFlowSolution(
        voltages=V,
        iterations=iterations,
        residual=residual,
        p0=float(S_slack.real - injections.p[SLACK]),
        q0=float(S_slack.imag - injections.q[SLACK]),
        losses_p=float(losses.real),
        losses_q=float(losses.imag),
        residual_history=history,
    )


@dataclass(frozen=True)
class BalanceReport:
    import_p: float
    injected_p: float
    losses_p: float
    residual: float


def power_balance(solution: PowerFlowSolution, injections: Injections) -> BalanceReport:
    """import + Σ net injections − branch losses, which is zero at convergence."""
    injected = float(injections.p.sum())
    return BalanceReport(
        import_p=solution.p0,
        injected_p=injected,
        losses_p=solution.losses_p,
        residual=solution.p0 + injected - solution.losses_p,
    )
