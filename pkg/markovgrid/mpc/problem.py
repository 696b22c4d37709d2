"""
Multi-period OPF with TCL populations as one sparse QP.

Decision variables over a horizon of T steps (t = 1..T):
  • x_k^t = (p, q) of every PV inverter
  • per population: ρ^1..ρ^T and the switch joints m^0..m^{T-1},
    m_j^t = M^t(j±δ, j) for the controllable columns
  • ε^t >= 0, the substation tracking slack

ρ^0 is the polled distribution and enters as data.  The remaining joints on
the fixed pattern are eliminated through the equality reduced rows,
M(i,j) = Π_nat(i,j)·(ρ_j − m_j), which leaves

    ρ^{t+1} = Π_nat ρ^t + B m^t,    0 <= m_j^t <= ρ_j^t

so the marginal rows hold identically and ρ stays on the simplex.  A switch
joint is only created where the column can carry more than
``OpfConfig.mass_floor`` of probability; elsewhere the column follows Π_nat.

The population draws P_j^t = P_max,j·wᵀρ_j^t, which enters the linear grid
model with the p-sensitivities of its bus.  Objective:

    (1/T) Σ_t [ Σ_k γ_P (P̄_k^t − p_k^t)²/S_k² + γ_Q (q_k^t)²/S_k²
                + γ_M Σ_pop Σ_j m_j^{t-1} + γ_P0 ε^t ]
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from ..config import settings
from ..errors import InfeasibleError, InputValidationError
from ..grid import Device, Sensitivities, pv_constraint_polytope
from ..mdp.core import StateDistribution
from ..schemas import OpfConfigDoc
from ..solver import ConvexProgram, ProgramBuilder, SolverConfig
from ..tcl import TclChainModel, check_cfl, reachable_mass, switch_dynamics, switch_joints

logger = logging.getLogger(__name__)

FORECAST_MODES = ("perfect", "persistence")


@dataclass(frozen=True)
class OpfConfig:
    horizon: int = settings.MPC_HORIZON
    dt_seconds: float = settings.MPC_DT_SECONDS
    v_min: float = 0.95
    v_max: float = 1.05
    gamma_p: float = 3.0
    gamma_q: float = 2.0
    gamma_m: float = 1.0
    gamma_p0: float = 1e6
    forecast_mode: str = "perfect"
    mass_floor: float = settings.MPC_MASS_FLOOR
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self) -> None:
        errors: list[str] = []
        if self.horizon < 1:
            errors.append(f"Horizon must be at least 1, got {self.horizon}.")
        if self.dt_seconds <= 0:
            errors.append(f"Time step must be positive, got {self.dt_seconds}.")
        if not self.v_min < self.v_max:
            errors.append(f"Voltage limits must satisfy v_min < v_max (got {self.v_min}, {self.v_max}).")
        for name in ("gamma_p", "gamma_q", "gamma_m", "gamma_p0"):
            if getattr(self, name) < 0:
                errors.append(f"{name} must be nonnegative, got {getattr(self, name)}.")
        if self.mass_floor < 0:
            errors.append(f"mass_floor must be nonnegative, got {self.mass_floor}.")
        if self.forecast_mode not in FORECAST_MODES:
            errors.append(f"Unknown forecast mode '{self.forecast_mode}'.")
        if errors:
            raise InputValidationError(errors)

    @classmethod
    def from_doc(cls, doc: OpfConfigDoc, **overrides) -> "OpfConfig":
        return replace(cls(**doc.model_dump()), **overrides)


@dataclass(frozen=True)
class Forecast:
    """Per-step data over the horizon, in pu: available PV power and reference import."""

    p_avail: np.ndarray            # T × num_pv
    reference: np.ndarray          # T

    @property
    def steps(self) -> int:
        return int(self.reference.size)


@dataclass(frozen=True)
class Population:
    """
    A TCL population on the feeder.  An uncontrolled population follows
    Π_nat: its joints are pinned to Π_nat·diag(ρ) and carry no switch entries.
    """

    device: Device
    chain: TclChainModel
    rho0: StateDistribution
    controllable: bool = True

    @property
    def pattern(self) -> np.ndarray:
        return self.chain.allowed_pattern if self.controllable else self.chain.fixed_pattern


@dataclass(frozen=True)
class MultiPeriodProblem:
    program: ConvexProgram
    horizon: int
    x_index: np.ndarray                  # T × num_pv × 2
    eps_index: np.ndarray                # T
    rho_index: list[np.ndarray]          # per population, T × N for ρ^1..ρ^T
    switch_index: list[np.ndarray]       # per population, T × |C|, −1 where the joint is pinned to 0
    populations: list[Population]

    def pv_setpoints(self, x: np.ndarray) -> np.ndarray:
        return x[self.x_index]

    def slack(self, x: np.ndarray) -> np.ndarray:
        return x[self.eps_index]

    def rho(self, x: np.ndarray, k: int) -> np.ndarray:
        """ρ^0..ρ^T of population ``k``, (T+1) × N."""
        return np.vstack([self.populations[k].rho0.values, x[self.rho_index[k]]])

    def switches(self, x: np.ndarray, k: int) -> np.ndarray:
        index = self.switch_index[k]
        values = np.zeros(index.shape)
        mask = index >= 0
        values[mask] = x[index[mask]]
        return values

    def joints(self, x: np.ndarray, k: int) -> np.ndarray:
        """M^0..M^{T-1} of population ``k``, T × N × N."""
        chain = self.populations[k].chain
        rho = self.rho(x, k)
        m = self.switches(x, k)
        return np.stack([switch_joints(chain, rho[t], m[t]) for t in range(self.horizon)])

    def tcl_power(self, x: np.ndarray) -> np.ndarray:
        """Expected population power per step t = 1..T, (T × num_pop), pu."""
        if not self.populations:
            return np.zeros((self.horizon, 0))
        return np.column_stack([
            x[self.rho_index[k]] @ pop.chain.power_weights * pop.device.p_max
            for k, pop in enumerate(self.populations)
        ])


def _add_population(
    builder: ProgramBuilder, k: int, pop: Population, T: int, mass_floor: float
) -> tuple[np.ndarray, np.ndarray]:
    chain = pop.chain
    N = chain.N
    rho0 = pop.rho0.values
    columns = chain.controllable_columns
    dynamics = switch_dynamics(chain)

    rho_index = np.vstack([
        builder.add_variables(f"rho{k}", N, lb=-np.inf, labels=[f"pop{k}.rho[{t + 1}][{i}]" for i in range(N)])
        for t in range(T)
    ])
    switch_index = -np.ones((T, columns.size), dtype=int)
    if pop.controllable:
        reach = reachable_mass(chain, rho0, T)
        for t in range(T):
            active = np.flatnonzero(reach[t, columns] > mass_floor)
            if active.size == 0:
                continue
            ub = rho0[columns[active]] if t == 0 else np.inf
            switch_index[t, active] = builder.add_variables(
                f"m{k}", active.size, lb=0.0, ub=ub, labels=[f"pop{k}.m[{t}][{columns[c]}]" for c in active]
            )
            if t == 0:
                continue
            for c in active:
                j = int(columns[c])
                builder.add_inequality([int(switch_index[t, c]), int(rho_index[t - 1, j])], [1.0, -1.0], 0.0,
                                       f"pop{k}.switch[{t}][{j}]")

    natural = dynamics.natural
    switch = dynamics.switch
    carried = natural @ rho0
    for t in range(T):
        for i in range(N):
            cols, vals = [int(rho_index[t, i])], [1.0]
            rhs = 0.0
            lo, hi = natural.indptr[i], natural.indptr[i + 1]
            if t == 0:
                rhs = float(carried[i])
            else:
                cols.extend(rho_index[t - 1, natural.indices[lo:hi]].tolist())
                vals.extend((-natural.data[lo:hi]).tolist())
            lo, hi = switch.indptr[i], switch.indptr[i + 1]
            for c, value in zip(switch.indices[lo:hi], switch.data[lo:hi]):
                if switch_index[t, c] >= 0:
                    cols.append(int(switch_index[t, c]))
                    vals.append(-float(value))
            builder.add_equality(cols, vals, rhs, f"pop{k}.dynamics[{t}][{i}]")
    return rho_index, switch_index


def assemble(
    config: OpfConfig,
    populations: Sequence[Population],
    sens: Sensitivities,
    pv_devices: Sequence[Device],
    forecast: Forecast,
) -> MultiPeriodProblem:
    """
    Build the horizon QP.  Raises ``InfeasibleError`` when a chain violates the
    CFL bound at ``config.dt_seconds`` and ``InputValidationError`` when the
    forecast or the linearization does not cover the horizon.
    """
    T = config.horizon
    errors: list[str] = []
    if forecast.steps < T or forecast.p_avail.shape[0] < T:
        errors.append(f"Forecast covers {forecast.steps} steps, horizon needs {T}.")
    if sens.num_steps < T:
        errors.append(f"Linearization covers {sens.num_steps} steps, horizon needs {T}.")
    if forecast.p_avail.ndim != 2 or forecast.p_avail.shape[1] != len(pv_devices):
        errors.append(f"Forecast has PV columns {forecast.p_avail.shape}, feeder has {len(pv_devices)} PV.")
    if sens.K_p.shape[1] <= max([d.node for d in pv_devices] + [p.device.node for p in populations], default=0):
        errors.append("Sensitivities do not cover every device node.")
    if errors:
        raise InputValidationError(errors)
    for pop in populations:
        cfl = check_cfl(pop.chain.params, pop.chain.grid, config.dt_seconds)
        if not cfl or abs(pop.chain.dt_seconds - config.dt_seconds) > 1e-9:
            raise InfeasibleError(
                f"Population '{pop.device.id}' is not valid at Δt={config.dt_seconds}s "
                f"(chain Δt={pop.chain.dt_seconds}s, CFL bound {cfl.dt_max_seconds:.3f}s)."
            )

    builder = ProgramBuilder()
    n_pv = len(pv_devices)
    x_index = np.zeros((T, n_pv, 2), dtype=int)
    for t in range(T):
        for k, dev in enumerate(pv_devices):
            avail = float(max(forecast.p_avail[t, k], 0.0))
            x_index[t, k, 0] = builder.add_variables("p", 1, lb=0.0, ub=avail, labels=[f"{dev.id}.p[{t + 1}]"])[0]
            x_index[t, k, 1] = builder.add_variables("q", 1, lb=-np.inf, ub=np.inf,
                                                     labels=[f"{dev.id}.q[{t + 1}]"])[0]
    eps_index = builder.add_variables("eps", T, lb=0.0, labels=[f"eps[{t + 1}]" for t in range(T)])

    rho_index, switch_index = [], []
    for k, pop in enumerate(populations):
        r, m = _add_population(builder, k, pop, T, config.mass_floor)
        rho_index.append(r)
        switch_index.append(m)

    pv_nodes = [dev.node for dev in pv_devices]
    tcl_nodes = [pop.device.node for pop in populations]
    for t in range(T):
        # PV capability rows; 0 <= p <= P̄ is carried by the bounds
        for k, dev in enumerate(pv_devices):
            poly = pv_constraint_polytope(dev.rating, float(max(forecast.p_avail[t, k], 0.0)))
            for row in range(poly.segments):
                builder.add_inequality(x_index[t, k], poly.A[row], poly.b[row], f"{dev.id}.disk[{t + 1}][{row}]")

        # linear terms shared by the voltage and tracking rows
        pv_cols = x_index[t].reshape(-1).tolist()
        tcl_cols: list[int] = []
        tcl_weights: list[np.ndarray] = []
        for k, pop in enumerate(populations):
            tcl_cols.extend(rho_index[k][t].tolist())
            tcl_weights.append(pop.chain.power_weights * pop.device.p_max)

        for node in range(sens.a_bar.shape[1]):
            coefs = np.column_stack([sens.K_p[node, pv_nodes], sens.K_q[node, pv_nodes]]).reshape(-1).tolist()
            for k, bus in enumerate(tcl_nodes):
                coefs.extend((-sens.K_p[node, bus] * tcl_weights[k]).tolist())
            builder.add_range(pv_cols + tcl_cols, coefs, config.v_min - sens.a_bar[t, node],
                              config.v_max - sens.a_bar[t, node], f"voltage[{t + 1}][{node + 1}]")

        coefs = np.column_stack([sens.k_p[pv_nodes], sens.k_q[pv_nodes]]).reshape(-1).tolist()
        for k, bus in enumerate(tcl_nodes):
            coefs.extend((-sens.k_p[bus] * tcl_weights[k]).tolist())
        target = float(forecast.reference[t] - sens.b_bar[t])
        eps = int(eps_index[t])
        builder.add_inequality(pv_cols + tcl_cols + [eps], coefs + [-1.0], target, f"track[{t + 1}]:hi")
        builder.add_inequality(pv_cols + tcl_cols + [eps], [-c for c in coefs] + [-1.0], -target,
                               f"track[{t + 1}]:lo")

    # objective
    scale = 1.0 / T
    for t in range(T):
        for k, dev in enumerate(pv_devices):
            s2 = dev.rating ** 2
            builder.add_square([x_index[t, k, 0]], [1.0], offset=float(max(forecast.p_avail[t, k], 0.0)),
                               weight=scale * config.gamma_p / s2)
            builder.add_square([x_index[t, k, 1]], [1.0], weight=scale * config.gamma_q / s2)
        builder.add_linear_cost([eps_index[t]], [scale * config.gamma_p0])
        for k in range(len(populations)):
            switch = switch_index[k][t][switch_index[k][t] >= 0]
            builder.add_linear_cost(switch, np.full(switch.size, scale * config.gamma_m))

    program = builder.build()
    logger.info("Assembled OPF: T=%d, %d PV, %d populations, %d variables, %d eq, %d ineq",
                T, n_pv, len(populations), program.n, program.num_eq, program.num_in)
    return MultiPeriodProblem(
        program=program,
        horizon=T,
        x_index=x_index,
        eps_index=eps_index,
        rho_index=rho_index,
        switch_index=switch_index,
        populations=list(populations),
    )
