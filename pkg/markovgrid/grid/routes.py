"""
Grid API routes. All endpoints live under /api/v1/grid/...
"""
from __future__ import annotations

import logging

from fastapi import APIRouter, HTTPException

from ..errors import MarkovgridError, http_status_for
from ..schemas import PowerFlowRequest, PowerFlowResponse
from .feeder import FeederModel
from .powerflow import solve_power_flow

logger = logging.getLogger(__name__)

router = APIRouter(prefix="/api/v1/grid", tags=["grid"])


@router.post("/powerflow", response_model=PowerFlowResponse)
def powerflow(payload: PowerFlowRequest):
    try:
        feeder = FeederModel.from_doc(payload.feeder)
        injections = feeder.injections_from_rows([(i.node, i.p, i.q) for i in payload.injections])
        solution = solve_power_flow(feeder, injections)
    except MarkovgridError as e:
        raise HTTPException(http_status_for(e), detail={"errors": e.errors, **e.context})

    return PowerFlowResponse(
        converged=solution.converged,
        iterations=solution.iterations,
        residual=solution.residual,
        v_mag=solution.v_mag.tolist(),
        v_angle_deg=solution.v_angle_deg.tolist(),
        p0=solution.p0,
        q0=solution.q0,
        losses_p=solution.losses_p,
    )
