"""
Monte Carlo agent populations driven by the controlled chain.

Every step draws one uniform number per agent from a generator seeded with
(seed, stream, step), so agent i always consumes the i-th draw of its step
and a run is reproducible regardless of how the work is split.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import InputValidationError
from ..mdp.core import StateDistribution, TransitionMatrix
from .chain import TclChainModel, estimate_distribution
from .control import apply_control

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AgentTrace:
    """Agent states per step (shape (T+1) × K) and the matching occupancy (T+1) × N."""

    states: np.ndarray
    occupancy: np.ndarray

    @property
    def num_agents(self) -> int:
        return int(self.states.shape[1])

    def distribution(self, t: int) -> StateDistribution:
        return StateDistribution(self.occupancy[t], t)


def step_rng(seed: int, stream: int, step: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(stream), int(step)]))


def sample_transitions(policy: TransitionMatrix, states: np.ndarray, draws: np.ndarray) -> np.ndarray:
    """Inverse-CDF sampling of the next state of each agent from its column."""
    cdf = np.cumsum(policy.entries[:, states], axis=0)
    cdf /= cdf[-1]
    nxt = (cdf <= draws[None, :]).sum(axis=0)
    return np.minimum(nxt, policy.entries.shape[0] - 1)


def step_agents(
    chain: TclChainModel,
    u: np.ndarray,
    states: np.ndarray,
    seed: int,
    stream: int = 0,
    step: int = 0,
) -> np.ndarray:
    """Advance every agent one step under the switch probabilities ``u``."""
    states = np.asarray(states, dtype=int)
    draws = step_rng(seed, stream, step).random(states.size)
    return sample_transitions(apply_control(chain, u), states, draws)


def sample_agents(
    chain: TclChainModel,
    controls: np.ndarray,
    K: int,
    initial_states: Optional[np.ndarray] = None,
    seed: int = 0,
    stream: int = 0,
) -> AgentTrace:
    """
    Simulate ``K`` agents for ``len(controls)`` steps.

    ``controls`` has one row of switch probabilities per step.  Without
    ``initial_states`` every agent starts in the cold-start state.
    """
    if K < 1:
        raise InputValidationError(f"Need at least one agent, got K={K}.")
    controls = np.atleast_2d(np.asarray(controls, dtype=float))
    if initial_states is None:
        initial_states = np.full(K, chain.grid.off_state(chain.grid.k_bar + 1))
    states = np.asarray(initial_states, dtype=int)
    if states.shape != (K,):
        raise InputValidationError(f"Expected {K} initial states, got shape {states.shape}.")
    if states.min() < 0 or states.max() >= chain.N:
        raise InputValidationError(f"Initial states must lie in 0..{chain.N - 1}.")

    T = controls.shape[0]
    trajectory = np.empty((T + 1, K), dtype=int)
    trajectory[0] = states
    for t in range(T):
        trajectory[t + 1] = step_agents(chain, controls[t], trajectory[t], seed, stream, t)
    occupancy = np.vstack([estimate_distribution(row, chain.N).values for row in trajectory])
    logger.debug("Sampled %d agents over %d steps (seed=%d, stream=%d)", K, T, seed, stream)
    return AgentTrace(states=trajectory, occupancy=occupancy)


def chain_marginals(chain: TclChainModel, controls: np.ndarray, rho0: StateDistribution) -> np.ndarray:
    """Model marginals ρ^0..ρ^T under the same control sequence."""
    controls = np.atleast_2d(np.asarray(controls, dtype=float))
    out = np.empty((controls.shape[0] + 1, chain.N))
    out[0] = rho0.values
    for t, u in enumerate(controls):
        out[t + 1] = apply_control(chain, u).entries @ out[t]
    return out
