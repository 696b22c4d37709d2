"""
Thermal model of a homogeneous heating TCL population.

    dθ = f_ψ(θ) dt + σ dW,      f_ψ(θ) = −(θ − θ_a)/(C·R) + ψ·η·P_h/C

Rates are in °C/hour and time in hours; the API boundary speaks seconds.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..errors import InputValidationError
from ..schemas import TclParametersDoc

logger = logging.getLogger(__name__)

SECONDS_PER_HOUR = 3600.0


@dataclass(frozen=True)
class TclParameters:
    C: float            # kWh/°C
    R: float            # °C/kW
    P_h: float          # kW
    sigma: float        # °C/√h
    eta: float
    theta_a: float      # °C
    theta_minus: float
    theta_plus: float
    theta_mm: float
    theta_pp: float

    def __post_init__(self) -> None:
        errors = validate_parameters_soft(self)
        if errors:
            raise InputValidationError(errors)

    @classmethod
    def from_doc(cls, doc: TclParametersDoc) -> "TclParameters":
        return cls(**doc.model_dump())

    def to_dict(self) -> dict:
        return asdict(self)


def drift(theta, psi, params: TclParameters):
    """f_ψ(θ) in °C/hour; vectorized over ``theta`` and ``psi``."""
    return -(np.asarray(theta) - params.theta_a) / (params.C * params.R) \
        + np.asarray(psi) * params.eta * params.P_h / params.C


# ─── Validation rules ───────────────────────────────────────────────────────

def _check_positive(p: TclParameters, errors: list[str]) -> None:
    for name in ("C", "R", "P_h", "eta"):
        if getattr(p, name) <= 0:
            errors.append(f"{name} must be positive, got {getattr(p, name)}.")
    if p.sigma < 0:
        errors.append(f"sigma must be nonnegative, got {p.sigma}.")


def _check_ordering(p: TclParameters, errors: list[str]) -> None:
    if not (p.theta_mm < p.theta_minus < p.theta_plus < p.theta_pp):
        errors.append(
            "Temperatures must satisfy theta_mm < theta_minus < theta_plus < theta_pp "
            f"(got {p.theta_mm}, {p.theta_minus}, {p.theta_plus}, {p.theta_pp})."
        )


def validate_parameters_soft(p: TclParameters) -> list[str]:
    errors: list[str] = []
    _check_positive(p, errors)
    _check_ordering(p, errors)
    return errors


def heating_dominates(p: TclParameters) -> bool:
    """f₁ > 0 on [θ_mm, θ_pp]; f₁ is decreasing in θ so the hot edge decides."""
    return bool(drift(p.theta_pp, 1, p) > 0)


def load_parameters(path: str | Path) -> TclParameters:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    params = TclParameters.from_doc(TclParametersDoc.model_validate(raw))
    logger.info("Loaded TCL parameters from %s", path)
    return params
