"""
Euler-Maruyama simulation of individual thermostats, used as the ground
truth the chain is checked against.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..config import settings
from ..errors import InputValidationError
from .params import SECONDS_PER_HOUR, TclParameters, drift

logger = logging.getLogger(__name__)

MAX_SDE_DT_SECONDS = 1.0


@dataclass(frozen=True)
class SdeTrajectory:
    times_s: np.ndarray            # recorded instants
    temperature: np.ndarray        # len(times) × K
    on: np.ndarray                 # len(times) × K, bool
    on_fraction: np.ndarray        # one value per integration step (incl. t=0)
    dt_s: float

    @property
    def num_agents(self) -> int:
        return int(self.temperature.shape[1])


def thermostat(theta: np.ndarray, on: np.ndarray, params: TclParameters) -> np.ndarray:
    """Switch OFF at or above θ_plus, ON at or below θ_minus, hold otherwise."""
    on = np.where(theta >= params.theta_plus, False, on)
    return np.where(theta <= params.theta_minus, True, on)


def simulate_sde(
    params: TclParameters,
    K: int,
    horizon_s: float,
    dt_s: Optional[float] = None,
    seed: int = 0,
    initial_temperature=None,
    initial_on=None,
    record_every_s: Optional[float] = None,
) -> SdeTrajectory:
    """
    θ ← θ + f_ψ(θ)·dt + σ·√dt·ξ with the thermostat applied after each step.

    Agents start at θ_plus and OFF unless initial values are given.
    """
    dt_s = settings.SDE_DT_SECONDS if dt_s is None else dt_s
    if K < 1:
        raise InputValidationError(f"Need at least one agent, got K={K}.")
    if not 0 < dt_s <= MAX_SDE_DT_SECONDS:
        raise InputValidationError(f"SDE step must lie in (0, {MAX_SDE_DT_SECONDS}] s, got {dt_s}.")

    steps = int(round(horizon_s / dt_s))
    every = max(1, int(round((record_every_s or dt_s) / dt_s)))
    dt_h = dt_s / SECONDS_PER_HOUR
    noise_scale = params.sigma * np.sqrt(dt_h)

    theta = np.full(K, params.theta_plus, dtype=float) if initial_temperature is None \
        else np.broadcast_to(np.asarray(initial_temperature, dtype=float), (K,)).copy()
    on = np.zeros(K, dtype=bool) if initial_on is None \
        else np.broadcast_to(np.asarray(initial_on, dtype=bool), (K,)).copy()

    rng = np.random.default_rng(seed)
    recorded_t, recorded_theta, recorded_on = [0.0], [theta.copy()], [on.copy()]
    on_fraction = np.empty(steps + 1)
    on_fraction[0] = on.mean()
    for k in range(1, steps + 1):
        theta = theta + drift(theta, on, params) * dt_h
        if noise_scale > 0:
            theta += noise_scale * rng.standard_normal(K)
        on = thermostat(theta, on, params)
        on_fraction[k] = on.mean()
        if k % every == 0:
            recorded_t.append(k * dt_s)
            recorded_theta.append(theta.copy())
            recorded_on.append(on.copy())

    logger.info("Simulated %d thermostats for %.0fs (dt=%.2fs)", K, horizon_s, dt_s)
    return SdeTrajectory(
        times_s=np.asarray(recorded_t),
        temperature=np.vstack(recorded_theta),
        on=np.vstack(recorded_on),
        on_fraction=on_fraction,
        dt_s=dt_s,
    )


def duty_cycle(trajectory: SdeTrajectory, start_s: float = 0.0) -> float:
    """Mean ON fraction from ``start_s`` to the end of the run."""
    first = int(round(start_s / trajectory.dt_s))
    window = trajectory.on_fraction[first:]
    if window.size == 0:
        raise InputValidationError(f"Window starting at {start_s}s is past the end of the run.")
    return float(window.mean())


def first_switch_time(trajectory: SdeTrajectory, agent: int = 0) -> Optional[float]:
    """Time of the first recorded ON/OFF change of one agent, or None."""
    flags = trajectory.on[:, agent]
    changes = np.flatnonzero(flags[1:] != flags[:-1])
    return None if changes.size == 0 else float(trajectory.times_s[changes[0] + 1])
