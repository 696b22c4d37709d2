"""
Scenario loading: one JSON document tying together the feeder, the TCL
parameters, the load / irradiance / reference series and the OPF settings.
Relative paths are resolved against the scenario file.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from pydantic import ValidationError as SchemaError

from ..errors import InputValidationError
from ..grid import FeederModel, Injections, load_feeder
from ..mpc.problem import Forecast, OpfConfig
from ..schemas import ScenarioDoc
from ..tcl import TclParameters, load_parameters
from .series import IRRADIANCE_COLUMNS, LOAD_COLUMNS, REFERENCE_COLUMNS, read_series_csv, step_scalar, step_values

logger = logging.getLogger(__name__)


@dataclass
class Scenario:
    doc: ScenarioDoc
    path: Path
    feeder: FeederModel
    params: TclParameters
    config: OpfConfig
    load_p: np.ndarray              # steps_total × num_nodes, pu injection
    load_q: np.ndarray
    p_avail: np.ndarray             # steps_total × num_pv, pu
    reference: np.ndarray           # steps_total, pu
    inputs: list[Path] = field(default_factory=list)

    @property
    def name(self) -> str:
        return self.doc.name

    @property
    def steps(self) -> int:
        return self.doc.steps

    @property
    def dt_seconds(self) -> float:
        return self.config.dt_seconds

    def loads(self, k: int) -> Injections:
        return Injections(self.load_p[k], self.load_q[k])

    def forecast(self, k: int, horizon: int, mode: Optional[str] = None) -> tuple[Forecast, list[Injections]]:
        """
        Data for steps k+1..k+horizon as seen at step k.  ``persistence``
        repeats the loads and PV availability observed at step k; the
        reference is a schedule and always known.
        """
        mode = mode or self.config.forecast_mode
        window = np.arange(k + 1, k + horizon + 1)
        if window[-1] >= self.reference.size:
            raise InputValidationError(
                f"Scenario covers {self.reference.size - 1} steps; step {k} needs data up to {window[-1]}."
            )
        reference = self.reference[window]
        if mode == "persistence":
            p_avail = np.repeat(self.p_avail[k][None, :], horizon, axis=0)
            loads = [self.loads(k)] * horizon
        else:
            p_avail = self.p_avail[window]
            loads = [self.loads(int(s)) for s in window]
        return Forecast(p_avail=p_avail, reference=reference), loads


def load_scenario(path: str | Path, horizon: Optional[int] = None) -> Scenario:
    """
    Parse and resolve a scenario file.  Series are sampled on the MPC grid
    t = 0, Δt, … covering the simulated steps plus one horizon.
    """
    path = Path(path)
    try:
        doc = ScenarioDoc.model_validate(json.loads(path.read_text(encoding="utf-8")))
    except json.JSONDecodeError as e:
        raise InputValidationError(f"{path.name} is not valid JSON: {e}")
    except SchemaError as e:
        raise InputValidationError([f"{path.name}: {err['loc']}: {err['msg']}" for err in e.errors()])

    def resolve(rel: str) -> Path:
        return (path.parent / rel).resolve()

    feeder = load_feeder(resolve(doc.feeder))
    params = load_parameters(resolve(doc.tcl_params))
    overrides = {"horizon": horizon} if horizon is not None else {}
    config = OpfConfig.from_doc(doc.config, **overrides)

    total = doc.steps + config.horizon + 1
    times = np.arange(total, dtype=float) * config.dt_seconds
    loads = read_series_csv(resolve(doc.loads), LOAD_COLUMNS)
    irradiance = read_series_csv(resolve(doc.irradiance), IRRADIANCE_COLUMNS)
    reference = read_series_csv(resolve(doc.reference), REFERENCE_COLUMNS)

    nodes = list(range(feeder.num_nodes))
    pv_ids = [d.id for d in feeder.pv_devices]
    unknown = sorted(set(irradiance["device"].astype(str)) - set(pv_ids))
    if unknown:
        raise InputValidationError(f"Irradiance file names unknown PV devices {unknown}.")
    irradiance["device"] = irradiance["device"].astype(str)

    for pop in doc.populations:
        if not feeder.device(pop.device).is_tcl:
            raise InputValidationError(f"Population '{pop.device}' does not refer to a TCL device.")

    scenario = Scenario(
        doc=doc,
        path=path,
        feeder=feeder,
        params=params,
        config=config,
        load_p=-step_values(loads, "node", "p_kw", times, nodes) / feeder.base_kva,
        load_q=-step_values(loads, "node", "q_kvar", times, nodes) / feeder.base_kva,
        p_avail=step_values(irradiance, "device", "p_avail_kw", times, pv_ids) / feeder.base_kva,
        reference=step_scalar(reference, "p0_ref_kw", times) / feeder.base_kva,
        inputs=[path.resolve(), resolve(doc.feeder), resolve(doc.tcl_params),
                resolve(doc.loads), resolve(doc.irradiance), resolve(doc.reference)],
    )
    logger.info("Loaded scenario '%s': %d steps of %.0fs, %d populations",
                doc.name, doc.steps, config.dt_seconds, len(doc.populations))
    return scenario
