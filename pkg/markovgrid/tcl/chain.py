"""
Markov-chain model of a TCL population from the Fokker-Planck equation.

The temperature range [θ_mm, θ_pp] is cut into n uniform bins of width Δx
with edges θ_k = θ_mm + (k−1)·Δx, k = 1..n+1.  ON densities are read at the
upper bin edge and OFF densities at the lower one, which gives the
tridiagonal generators A_on (ON bins 1..k̄) and A_off (OFF bins k̲..n);
deadband exits couple the two blocks:

  • ON bin k̄ (upper edge θ_plus) feeds OFF bin k̄+1
  • OFF bin k̲ (lower edge θ_minus) feeds ON bin k̲−1

State layout (1-based, as in the formulas): ON bin b is state b, OFF bin b
is state b+δ with δ = k̄+1−k̲.  Arrays are zero-based, so state s here is
s−1 in code.

The Euler step Π_nat = I + Δt·A_nat is a stochastic matrix as long as Δt
respects the bound returned by ``check_cfl``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from ..errors import InfeasibleError, InputValidationError
from ..mdp.core import StateDistribution, TransitionMatrix, validate_transition_matrix
from .params import SECONDS_PER_HOUR, TclParameters, drift

logger = logging.getLogger(__name__)

DIVISIBILITY_TOL = 1e-9
GENERATOR_TOL = 1e-12
CFL_WARN_MARGIN = 0.05


# ─── Grid ───────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class TemperatureGrid:
    dx: float
    edges: np.ndarray      # θ_1..θ_{n+1}
    n: int
    k_bar: int             # last ON bin (1-based), θ_{k̄+1} = θ_plus
    k_under: int           # first OFF bin (1-based), θ_{k̲} = θ_minus
    delta: int
    N: int

    @property
    def theta_mm(self) -> float:
        return float(self.edges[0])

    def on_state(self, b: int) -> int:
        """Zero-based state of ON bin ``b`` (1-based)."""
        return b - 1

    def off_state(self, b: int) -> int:
        """Zero-based state of OFF bin ``b`` (1-based)."""
        return b + self.delta - 1

    def state_bins(self) -> tuple[np.ndarray, np.ndarray]:
        """Per zero-based state: (1-based bin, ψ)."""
        bins = np.concatenate([np.arange(1, self.k_bar + 1), np.arange(self.k_under, self.n + 1)])
        psi = np.concatenate([np.ones(self.k_bar, dtype=int), np.zeros(self.N - self.k_bar, dtype=int)])
        return bins, psi

    @property
    def on_mask(self) -> np.ndarray:
        mask = np.zeros(self.N, dtype=bool)
        mask[: self.k_bar] = True
        return mask


def _steps(offset: float, dx: float, what: str) -> int:
    ratio = offset / dx
    k = int(round(ratio))
    if abs(ratio - k) > DIVISIBILITY_TOL or k < 1:
        raise InputValidationError(f"Bin width {dx} does not divide the {what} offset {offset}.")
    return k


def build_grid(params: TclParameters, dx: float) -> TemperatureGrid:
    if dx <= 0:
        raise InputValidationError(f"Bin width must be positive, got {dx}.")
    errors: list[str] = []
    steps = {}
    for name, value in (("theta_minus", params.theta_minus), ("theta_plus", params.theta_plus),
                        ("theta_pp", params.theta_pp)):
        try:
            steps[name] = _steps(value - params.theta_mm, dx, name)
        except InputValidationError as exc:
            errors.extend(exc.errors)
    if errors:
        raise InputValidationError(errors)

    n = steps["theta_pp"]
    k_bar = steps["theta_plus"]
    k_under = steps["theta_minus"] + 1
    delta = k_bar + 1 - k_under
    N = k_bar + (n - k_under + 1)
    edges = params.theta_mm + dx * np.arange(n + 1)
    return TemperatureGrid(dx=dx, edges=edges, n=n, k_bar=k_bar, k_under=k_under, delta=delta, N=N)


# ─── CFL bound ──────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class CflReport:
    passed: bool
    dt_max_seconds: float
    max_rate: float        # °C/hour

    def __bool__(self) -> bool:
        return self.passed


def check_cfl(params: TclParameters, grid: TemperatureGrid, dt_seconds: float) -> CflReport:
    """Largest Euler step keeping every diagonal of Π_nat nonnegative."""
    diffusion = 2.0 * params.sigma ** 2 / grid.dx
    rates = np.concatenate([
        np.abs(drift(grid.edges, 0, params) - diffusion),
        np.abs(drift(grid.edges, 1, params) + diffusion),
    ])
    max_rate = float(rates.max())
    dt_max = grid.dx / max_rate * SECONDS_PER_HOUR if max_rate > 0 else np.inf
    passed = dt_seconds <= dt_max
    if passed and dt_seconds > (1.0 - CFL_WARN_MARGIN) * dt_max:
        logger.warning("Time step %.3fs is within %d%% of the CFL bound %.3fs",
                       dt_seconds, int(CFL_WARN_MARGIN * 100), dt_max)
    return CflReport(passed=passed, dt_max_seconds=dt_max, max_rate=max_rate)


# ─── Chain ──────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class TclChainModel:
    params: TclParameters
    grid: TemperatureGrid
    generator: np.ndarray          # A_nat, per hour
    natural: TransitionMatrix      # Π_nat
    dt_seconds: float

    @property
    def N(self) -> int:
        return self.grid.N

    @property
    def dt_hours(self) -> float:
        return self.dt_seconds / SECONDS_PER_HOUR

    @property
    def on_columns(self) -> np.ndarray:
        """Zero-based controllable ON states (bins k̲..k̄), switched to j+δ."""
        return np.arange(self.grid.k_under - 1, self.grid.k_bar)

    @property
    def off_columns(self) -> np.ndarray:
        """Zero-based controllable OFF states (k̄+1..k̄+δ), switched to j−δ."""
        return np.arange(self.grid.k_bar, self.grid.k_bar + self.grid.delta)

    @property
    def controllable_columns(self) -> np.ndarray:
        return np.concatenate([self.on_columns, self.off_columns])

    @property
    def switch_targets(self) -> np.ndarray:
        d = self.grid.delta
        return np.concatenate([self.on_columns + d, self.off_columns - d])

    @property
    def fixed_pattern(self) -> np.ndarray:
        """F: the natural transitions, which the controller can only scale."""
        return self.natural.entries != 0.0

    @property
    def allowed_pattern(self) -> np.ndarray:
        """Natural transitions plus the commanded switch entries."""
        pattern = self.fixed_pattern.copy()
        pattern[self.switch_targets, self.controllable_columns] = True
        return pattern

    @property
    def power_weights(self) -> np.ndarray:
        """w: 1 on ON states, 0 on OFF states."""
        return self.grid.on_mask.astype(float)


def _generator(params: TclParameters, grid: TemperatureGrid) -> np.ndarray:
    """A_nat on the N reachable states (rates per hour)."""
    dx = grid.dx
    d = params.sigma ** 2 / dx
    edges = grid.edges                      # edges[k-1] = θ_k
    A = np.zeros((grid.N, grid.N))

    # ON block, bins 1..k̄; density read at the upper edge θ_{i+1}
    for i in range(1, grid.k_bar + 1):
        col = grid.on_state(i)
        f1 = float(drift(edges[i], 1, params))
        lower_neighbour = i > 1
        A[col, col] = (-f1 - (2.0 if lower_neighbour else 1.0) * d) / dx
        if lower_neighbour:
            A[grid.on_state(i - 1), col] = d / dx
        up = grid.on_state(i + 1) if i < grid.k_bar else grid.off_state(grid.k_bar + 1)
        A[up, col] = (f1 + d) / dx

    # OFF block, bins k̲..n; density read at the lower edge θ_i
    for i in range(grid.k_under, grid.n + 1):
        col = grid.off_state(i)
        f0 = float(drift(edges[i - 1], 0, params))
        upper_neighbour = i < grid.n
        A[col, col] = (f0 - (2.0 if upper_neighbour else 1.0) * d) / dx
        if upper_neighbour:
            A[grid.off_state(i + 1), col] = d / dx
        down = grid.off_state(i - 1) if i > grid.k_under else grid.on_state(grid.k_under - 1)
        A[down, col] = (-f0 + d) / dx
    return A


def build_natural_chain(params: TclParameters, grid: TemperatureGrid, dt_seconds: float) -> TclChainModel:
    """
    Assemble A_nat and Π_nat = I + Δt·A_nat.

    Raises ``InfeasibleError`` on a CFL violation, on a non-positive heating
    drift, or when the OFF drift makes an off-diagonal rate negative.
    """
    errors: list[str] = []
    f1 = drift(grid.edges, 1, params)
    if np.any(f1 <= 0):
        errors.append(f"Heating drift f1 is not positive on the whole grid (min {f1.min():.4f} °C/h).")
    f0_off = drift(grid.edges[grid.k_under - 1: grid.n], 0, params)
    if np.any(-f0_off + params.sigma ** 2 / grid.dx < 0):
        errors.append("OFF drift is positive inside the OFF bins; the generator would not be Metzler.")
    cfl = check_cfl(params, grid, dt_seconds)
    if not cfl:
        errors.append(f"Time step {dt_seconds}s exceeds the CFL bound {cfl.dt_max_seconds:.3f}s.")
    if errors:
        raise InfeasibleError(errors, context={"dt_max_seconds": cfl.dt_max_seconds})

    A = _generator(params, grid)
    column_sums = np.abs(A.sum(axis=0))
    if column_sums.max() > GENERATOR_TOL * max(1.0, np.abs(A).max()):
        raise InfeasibleError(f"Generator columns do not sum to zero (max {column_sums.max():.3e}).")

    dt_h = dt_seconds / SECONDS_PER_HOUR
    Pi = np.eye(grid.N) + dt_h * A
    if not validate_transition_matrix(Pi, GENERATOR_TOL):
        raise InfeasibleError("Natural transition matrix is not column-stochastic.")
    logger.info("Built TCL chain: N=%d, k_bar=%d, k_under=%d, delta=%d, dt=%.1fs (CFL %.1fs)",
                grid.N, grid.k_bar, grid.k_under, grid.delta, dt_seconds, cfl.dt_max_seconds)
    return TclChainModel(params=params, grid=grid, generator=A, natural=TransitionMatrix(Pi),
                         dt_seconds=dt_seconds)


def natural_sparse(chain: TclChainModel) -> sp.coo_matrix:
    """Π_nat as COO triplets (for CSV export)."""
    return sp.coo_matrix(chain.natural.entries)


# ─── Distributions and bookkeeping ──────────────────────────────────────────

def stationary_distribution(chain: TclChainModel, u: Optional[np.ndarray] = None) -> StateDistribution:
    """Long-run distribution of Π_nat (or of the chain under the constant control ``u``)."""
    from .control import apply_control

    Pi = chain.natural.entries if u is None else apply_control(chain, u).entries
    system = Pi - np.eye(chain.N)
    system[-1, :] = 1.0
    rhs = np.zeros(chain.N)
    rhs[-1] = 1.0
    rho = np.linalg.solve(system, rhs)
    return StateDistribution.from_solver(rho, 0)


def initial_distribution(chain: TclChainModel, mode: str = "cold_start") -> StateDistribution:
    """
    ``cold_start``: all mass OFF in the bin whose lower edge is θ_plus.
    ``stationary``: the natural chain's long-run distribution.
    """
    if mode == "stationary":
        return stationary_distribution(chain)
    if mode != "cold_start":
        raise InputValidationError(f"Unknown initial distribution mode '{mode}'.")
    rho = np.zeros(chain.N)
    rho[chain.grid.off_state(chain.grid.k_bar + 1)] = 1.0
    return StateDistribution(rho, 0)


def expected_power(rho: StateDistribution, chain: TclChainModel, p_max: float) -> float:
    """wᵀρ·P_max, the expected power of a population with rated total ``p_max``."""
    if rho.N != chain.N:
        raise InputValidationError(f"Distribution has {rho.N} states, chain has {chain.N}.")
    return float(chain.power_weights @ rho.values * p_max)


def agent_to_state(temperature, on, grid: TemperatureGrid) -> np.ndarray:
    """
    Zero-based chain state of each agent.  Bins follow θ_k <= x <= θ_{k+1}
    with an edge assigned to the lower bin; agents whose bin is outside their
    mode's range are clamped to it.
    """
    temperature = np.atleast_1d(np.asarray(temperature, dtype=float))
    on = np.atleast_1d(np.asarray(on, dtype=bool))
    ratio = (temperature - grid.theta_mm) / grid.dx
    nearest = np.round(ratio)
    on_edge = np.abs(ratio - nearest) <= DIVISIBILITY_TOL
    bins = np.where(on_edge, nearest, np.floor(ratio) + 1).astype(int)
    bins = np.clip(bins, 1, grid.n)
    on_bins = np.clip(bins, 1, grid.k_bar)
    off_bins = np.clip(bins, grid.k_under, grid.n)
    return np.where(on, on_bins - 1, off_bins + grid.delta - 1)


def state_to_temperature(state, grid: TemperatureGrid) -> tuple[np.ndarray, np.ndarray]:
    """Bin-centre temperature and ON flag of each zero-based state."""
    bins, psi = grid.state_bins()
    state = np.atleast_1d(np.asarray(state, dtype=int))
    centre = grid.edges[bins[state] - 1] + 0.5 * grid.dx
    return centre, psi[state].astype(bool)


def estimate_distribution(states, N: int) -> StateDistribution:
    """Empirical distribution of polled agent states."""
    states = np.asarray(states, dtype=int)
    if states.size == 0:
        raise InputValidationError("Cannot estimate a distribution from zero agents.")
    counts = np.bincount(states, minlength=N)
    return StateDistribution(counts / states.size, 0)
