"""
Finite-difference linearization of the power flow around a base point.

Central differences with step h on the p and q injection of every node
give the nodal sensitivity matrices

    K_p[:, n] = ∂|V_{1..N}|/∂p_n,    K_q[:, n] = ∂|V_{1..N}|/∂q_n
    k_p[n]    = ∂P_0/∂p_n,           k_q[n]    = ∂P_0/∂q_n

A device inherits the columns of its node: a PV k gets G_k = [K_p, K_q](node)
and φ_k = (k_p, k_q)(node); a TCL population gets the p-columns, entering
with a minus sign because it consumes.  Intercepts ā^t, b̄^t fold the
uncontrollable load of step t in so that the model is exact at the base.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..config import settings
from ..errors import InputValidationError
from .feeder import FeederModel, Injections, injections_for
from .powerflow import PowerFlowSolution, solve_power_flow

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Sensitivities:
    feeder_name: str
    K_p: np.ndarray                 # (n−1) × n
    K_q: np.ndarray
    k_p: np.ndarray                 # n
    k_q: np.ndarray
    base: Injections
    base_v: np.ndarray              # |V| at nodes 1..n−1
    base_p0: float
    pv_nodes: np.ndarray
    tcl_nodes: np.ndarray
    a_bar: np.ndarray               # steps × (n−1)
    b_bar: np.ndarray               # steps

    @property
    def num_steps(self) -> int:
        return int(self.b_bar.size)

    @property
    def G(self) -> np.ndarray:
        """PV voltage sensitivities, (num_pv, n−1, 2)."""
        return np.stack([np.column_stack([self.K_p[:, n], self.K_q[:, n]]) for n in self.pv_nodes]) \
            if self.pv_nodes.size else np.zeros((0, self.K_p.shape[0], 2))

    @property
    def phi(self) -> np.ndarray:
        """PV substation-power sensitivities, (num_pv, 2)."""
        return np.column_stack([self.k_p[self.pv_nodes], self.k_q[self.pv_nodes]]) \
            if self.pv_nodes.size else np.zeros((0, 2))

    @property
    def g_tcl(self) -> np.ndarray:
        """TCL voltage sensitivities to consumed power, (num_tcl, n−1)."""
        return self.K_p[:, self.tcl_nodes].T

    @property
    def phi_tcl(self) -> np.ndarray:
        return self.k_p[self.tcl_nodes]

    def predict(self, injections: Injections) -> tuple[np.ndarray, float]:
        """Linear model over the full nodal injection vector."""
        dp = injections.p - self.base.p
        dq = injections.q - self.base.q
        v = self.base_v + self.K_p @ dp + self.K_q @ dq
        p0 = self.base_p0 + self.k_p @ dp + self.k_q @ dq
        return v, float(p0)


def base_point(
    feeder: FeederModel,
    loads: Injections,
    p_avail: Optional[np.ndarray] = None,
    pv_fraction: float = 0.5,
    tcl_fraction: float | Sequence[float] = 0.5,
) -> tuple[Injections, np.ndarray, np.ndarray]:
    """
    Operating point for the linearization: forecast load, PV at
    ``pv_fraction`` of available power, TCLs at ``tcl_fraction`` of P_max
    (one value for all, or one per TCL device).
    Returns (injections, PV setpoints, TCL power).
    """
    pvs, tcls = feeder.pv_devices, feeder.tcl_devices
    p_avail = np.zeros(len(pvs)) if p_avail is None else np.asarray(p_avail, dtype=float)
    pv_x = np.column_stack([pv_fraction * p_avail, np.zeros(len(pvs))])
    fractions = np.broadcast_to(np.asarray(tcl_fraction, dtype=float), (len(tcls),))
    tcl_p = fractions * np.array([d.p_max for d in tcls])
    return loads + injections_for(feeder, pv_x, tcl_p), pv_x, tcl_p


def _perturbed_solve(feeder: FeederModel, base: Injections, node: int, dp: float, dq: float) -> PowerFlowSolution:
    return solve_power_flow(feeder, base.with_added(node, dp, dq))


def linearize(
    feeder: FeederModel,
    base: Injections,
    loads: Optional[Sequence[Injections]] = None,
    base_loads: Optional[Injections] = None,
    step: Optional[float] = None,
    workers: Optional[int] = None,
) -> Sensitivities:
    """
    Sensitivities around ``base`` (which must solve).

    ``loads`` are the uncontrollable injections per horizon step and
    ``base_loads`` the uncontrollable part of ``base`` (all of it when
    omitted); without ``loads`` the intercepts describe a single step whose
    loads equal ``base_loads``.
    Perturbed power flows run on a thread pool and are assembled in a fixed
    order.
    """
    h = settings.FD_STEP if step is None else step
    workers = settings.LINEARIZATION_WORKERS if workers is None else workers
    n = feeder.num_nodes
    base_solution = solve_power_flow(feeder, base)

    jobs = [(node, sign * h if kind == "p" else 0.0, sign * h if kind == "q" else 0.0)
            for node in range(n) for kind in ("p", "q") for sign in (1.0, -1.0)]
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = list(pool.map(lambda job: _perturbed_solve(feeder, base, *job), jobs))

    K = np.zeros((2, n - 1, n))
    k = np.zeros((2, n))
    for idx in range(0, len(jobs), 2):
        node = jobs[idx][0]
        which = 0 if jobs[idx][1] != 0.0 else 1
        plus, minus = results[idx], results[idx + 1]
        K[which, :, node] = (plus.v_mag[1:] - minus.v_mag[1:]) / (2 * h)
        k[which, node] = (plus.p0 - minus.p0) / (2 * h)

    base_v = base_solution.v_mag[1:]
    base_p0 = base_solution.p0
    if loads is None:
        loads = [base if base_loads is None else base_loads]
    a_bar, b_bar = [], []
    for load in loads:
        # intercept: the model evaluated with every device at zero
        dp = load.p - base.p
        dq = load.q - base.q
        a_bar.append(base_v + K[0] @ dp + K[1] @ dq)
        b_bar.append(base_p0 + k[0] @ dp + k[1] @ dq)

    pv_nodes = np.array([d.node for d in feeder.pv_devices], dtype=int)
    tcl_nodes = np.array([d.node for d in feeder.tcl_devices], dtype=int)
    logger.info("Linearized '%s' at base P0=%.4f pu with %d power flows", feeder.name, base_p0, len(jobs) + 1)
    return Sensitivities(
        feeder_name=feeder.name,
        K_p=K[0], K_q=K[1], k_p=k[0], k_q=k[1],
        base=base, base_v=base_v, base_p0=base_p0,
        pv_nodes=pv_nodes, tcl_nodes=tcl_nodes,
        a_bar=np.vstack(a_bar), b_bar=np.asarray(b_bar),
    )


def evaluate_linear(
    sens: Sensitivities,
    pv_setpoints: Optional[np.ndarray] = None,
    tcl_power: Optional[np.ndarray] = None,
    t: int = 0,
) -> tuple[np.ndarray, float]:
    """
    v = Σ_k G_k x_k − Σ_j g_j P_j + ā^t  and  P_0 = Σ_k φ_kᵀ x_k − Σ_j φ_j P_j + b̄^t.

    ``pv_setpoints`` is (num_pv, 2) in pu, ``tcl_power`` (num_tcl,) in pu.
    """
    if not 0 <= t < sens.num_steps:
        raise InputValidationError(f"Step {t} outside the {sens.num_steps} linearized steps.")
    x = np.zeros((sens.pv_nodes.size, 2)) if pv_setpoints is None else np.asarray(pv_setpoints, dtype=float)
    P = np.zeros(sens.tcl_nodes.size) if tcl_power is None else np.atleast_1d(np.asarray(tcl_power, dtype=float))
    if x.shape != (sens.pv_nodes.size, 2) or P.shape != (sens.tcl_nodes.size,):
        raise InputValidationError(
            f"Expected PV setpoints {(sens.pv_nodes.size, 2)} and TCL power {(sens.tcl_nodes.size,)}, "
            f"got {x.shape} and {P.shape}."
        )
    v = np.einsum("knc,kc->n", sens.G, x) - sens.g_tcl.T @ P + sens.a_bar[t]
    p0 = float(np.einsum("kc,kc->", sens.phi, x) - sens.phi_tcl @ P + sens.b_bar[t])
    return v, p0


@dataclass(frozen=True)
class SweepReport:
    max_voltage_error: float
    max_p0_error: float
    points: int


def sweep_error(
    feeder: FeederModel,
    base: Injections,
    fraction: float = 0.1,
    points: int = 5,
    sens: Optional[Sensitivities] = None,
) -> SweepReport:
    """Largest linear-vs-nonlinear error while scaling ``base`` by 1 ± ``fraction``."""
    sens = sens or linearize(feeder, base)
    v_err = p_err = 0.0
    for factor in np.linspace(1.0 - fraction, 1.0 + fraction, points):
        injections = base.scaled(float(factor))
        exact = solve_power_flow(feeder, injections)
        v_lin, p0_lin = sens.predict(injections)
        v_err = max(v_err, float(np.max(np.abs(v_lin - exact.v_mag[1:]), initial=0.0)))
        p_err = max(p_err, abs(p0_lin - exact.p0))
    return SweepReport(max_voltage_error=v_err, max_p0_error=p_err, points=points)
