"""
TCL API routes. All endpoints live under /api/v1/tcl/...
"""
from __future__ import annotations

import logging

from fastapi import APIRouter, HTTPException

from ..errors import MarkovgridError, http_status_for
from ..schemas import DiscretizeRequest, DiscretizeResponse
from .chain import build_grid, build_natural_chain, check_cfl, stationary_distribution
from .params import TclParameters

logger = logging.getLogger(__name__)

router = APIRouter(prefix="/api/v1/tcl", tags=["tcl"])


@router.post("/discretize", response_model=DiscretizeResponse)
def discretize(payload: DiscretizeRequest):
    """Grid bookkeeping and CFL verdict; the stationary ON mass when the chain builds."""
    try:
        params = TclParameters.from_doc(payload.params)
        grid = build_grid(params, payload.dx)
        cfl = check_cfl(params, grid, payload.dt_seconds)
        on_fraction = None
        if cfl.passed:
            chain = build_natural_chain(params, grid, payload.dt_seconds)
            on_fraction = float(stationary_distribution(chain).values[grid.on_mask].sum())
    except MarkovgridError as e:
        raise HTTPException(http_status_for(e), detail={"errors": e.errors, **e.context})

    return DiscretizeResponse(
        N=grid.N,
        n_bins=grid.n,
        k_bar=grid.k_bar,
        k_under=grid.k_under,
        delta=grid.delta,
        cfl_pass=cfl.passed,
        dt_max_seconds=cfl.dt_max_seconds,
        stationary_on_fraction=on_fraction,
    )
