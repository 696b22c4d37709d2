"""Pydantic models for markovgrid input documents and API payloads."""
from pydantic import BaseModel, Field
from typing import Optional, List, Union, Dict
from enum import Enum


# ─── Enums (for schema validation) ───────────────────────────────────────

class ConstraintFormEnum(str, Enum):
    CONVEX_RHO = "convex_rho"
    CONVEX_JOINT = "convex_joint"
    LINEAR_COLUMN = "linear_column"


# ─── MDP problem document ─────────────────────────────────────────────────

class LinearTermDoc(BaseModel):
    var: List[Union[str, int]] = Field(..., description='["rho", t, i] or ["M", t, i, j]')
    coef: float


class SquareTermDoc(BaseModel):
    weight: float = 1.0
    terms: List[LinearTermDoc]
    offset: float = 0.0


class ExpressionDoc(BaseModel):
    linear: List[LinearTermDoc] = []
    squares: List[SquareTermDoc] = []
    constant: float = 0.0


class ConstraintDoc(BaseModel):
    form: ConstraintFormEnum
    # linear_column payload
    t: Optional[int] = None
    j: Optional[int] = None
    alpha: Optional[List[float]] = None
    beta: Optional[float] = None
    # convex_rho / convex_joint payload (expr <= 0)
    expr: Optional[ExpressionDoc] = None


class MdpProblemDoc(BaseModel):
    N: int
    T: int
    rho0: List[float]
    cost: ExpressionDoc = ExpressionDoc()
    constraints: List[ConstraintDoc] = []
    allowed: Optional[List[List[int]]] = Field(
        default=None, description="[i, j] pairs of permitted transitions j -> i; dense when absent"
    )


class KktReportOut(BaseModel):
    stationarity: float
    equality: float
    inequality: float
    complementarity: float
    dual_sign: float
    stationarity_abs: float
    equality_abs: float
    inequality_abs: float
    complementarity_abs: float
    tol: float
    passed: bool


class MdpSolutionOut(BaseModel):
    status: str
    objective: float
    iterations: int
    rho: List[List[float]]
    policies: List[List[List[float]]]
    kkt: KktReportOut


# ─── TCL documents ────────────────────────────────────────────────────────

class TclParametersDoc(BaseModel):
    C: float = Field(..., description="Thermal capacity, kWh/°C")
    R: float = Field(..., description="Thermal resistance, °C/kW")
    P_h: float = Field(..., description="Heating power, kW")
    sigma: float = Field(..., description="Noise standard deviation, °C")
    eta: float = Field(..., description="Coefficient of performance")
    theta_a: float = Field(..., description="Ambient temperature, °C")
    theta_minus: float
    theta_plus: float
    theta_mm: float
    theta_pp: float


class DiscretizeRequest(BaseModel):
    params: TclParametersDoc
    dx: float = Field(0.1, gt=0, description="Bin width, °C")
    dt_seconds: float = Field(20.0, gt=0)


class DiscretizeResponse(BaseModel):
    N: int
    n_bins: int
    k_bar: int
    k_under: int
    delta: int
    cfl_pass: bool
    dt_max_seconds: float
    stationary_on_fraction: Optional[float] = None


# ─── Grid documents ───────────────────────────────────────────────────────

class BranchDoc(BaseModel):
    from_node: int = Field(..., alias="from")
    to_node: int = Field(..., alias="to")
    r: float
    x: float

    model_config = {"populate_by_name": True}


class DeviceDoc(BaseModel):
    id: str
    kind: str = Field(..., description='"pv" or "tcl"')
    node: int
    rating_kva: Optional[float] = None
    agents: Optional[int] = None
    p_max_kw: Optional[float] = None


class FeederDoc(BaseModel):
    name: str = "feeder"
    base_kva: float = 1000.0
    nodes: List[int]
    branches: List[BranchDoc]
    devices: List[DeviceDoc] = []


class InjectionDoc(BaseModel):
    node: int
    p: float = Field(..., description="Net injection, pu (positive = generation)")
    q: float = 0.0


class PowerFlowRequest(BaseModel):
    feeder: FeederDoc
    injections: List[InjectionDoc] = []


class PowerFlowResponse(BaseModel):
    converged: bool
    iterations: int
    residual: float
    v_mag: List[float]
    v_angle_deg: List[float]
    p0: float
    q0: float
    losses_p: float


# ─── Scenario document ────────────────────────────────────────────────────

class PopulationDoc(BaseModel):
    device: str = Field(..., description="TCL device id in the feeder file")
    dx: float = 0.1
    initial: str = Field("cold_start", description='"cold_start" or "stationary"')


class OpfConfigDoc(BaseModel):
    horizon: int = 20
    dt_seconds: float = 20.0
    v_min: float = 0.95
    v_max: float = 1.05
    gamma_p: float = 3.0
    gamma_q: float = 2.0
    gamma_m: float = 1.0
    gamma_p0: float = 1e6
    forecast_mode: str = Field("perfect", description='"perfect" or "persistence"')


class ScenarioDoc(BaseModel):
    name: str
    feeder: str = Field(..., description="Feeder JSON path, relative to the scenario file")
    tcl_params: str = Field(..., description="TCL parameter JSON path")
    loads: str = Field(..., description="CSV t,node,p_kw,q_kvar")
    irradiance: str = Field(..., description="CSV t,device,p_avail_kw")
    reference: str = Field(..., description="CSV t,p0_ref_kw")
    steps: int = Field(..., ge=1, description="Simulated MPC steps")
    populations: List[PopulationDoc] = []
    config: OpfConfigDoc = OpfConfigDoc()
    tracking_tolerance_kw: float = 1.0
    meta: Dict[str, Union[str, float, int]] = {}
