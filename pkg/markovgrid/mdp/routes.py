"""
MDP API routes. All endpoints live under /api/v1/mdp/...
"""
from __future__ import annotations

import logging

from fastapi import APIRouter, HTTPException

from ..errors import MarkovgridError, http_status_for
from ..schemas import KktReportOut, MdpProblemDoc, MdpSolutionOut
from ..solver import SolverConfig
from .convexify import MdpSolution, solve_mdp
from .problem import MdpProblem
from .validation import validate_problem_soft

logger = logging.getLogger(__name__)

router = APIRouter(prefix="/api/v1/mdp", tags=["mdp"])


def solution_out(result: MdpSolution) -> MdpSolutionOut:
    return MdpSolutionOut(
        status=result.status.value,
        objective=result.objective,
        iterations=result.solution.iterations,
        rho=[d.values.tolist() for d in result.distributions],
        policies=[p.entries.tolist() for p in result.policies],
        kkt=KktReportOut(**result.kkt.as_dict()),
    )


@router.post("/validate")
def validate(payload: MdpProblemDoc):
    """Every problem found in one pass; never fails on a well-formed document."""
    try:
        problem = MdpProblem.from_doc(payload)
    except MarkovgridError as e:
        return {"valid": False, "errors": e.errors}
    errors = validate_problem_soft(problem)
    return {"valid": not errors, "errors": errors}


@router.post("/solve", response_model=MdpSolutionOut)
def solve(payload: MdpProblemDoc):
    try:
        problem = MdpProblem.from_doc(payload)
        result = solve_mdp(problem, SolverConfig())
    except MarkovgridError as e:
        logger.warning("MDP solve rejected: %s", e)
        raise HTTPException(http_status_for(e), detail={"errors": e.errors})
    return solution_out(result)
