"""HTTP API for markovgrid: thin adapters over the library calls the CLI uses."""

import logging
from contextlib import asynccontextmanager
from datetime import datetime, timezone

from fastapi import FastAPI

from .config import ensure_directories, settings
from .grid.routes import router as grid_router
from .mdp.routes import router as mdp_router
from .tcl.routes import router as tcl_router

ensure_directories()

logging.basicConfig(
    level=getattr(logging, settings.LOG_LEVEL),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    handlers=[
        logging.FileHandler(settings.LOG_FILE),
        logging.StreamHandler()
    ]
)
logger = logging.getLogger(__name__)


@asynccontextmanager
async def lifespan(app: FastAPI):
    logger.info(f"Starting {settings.APP_NAME} v{settings.APP_VERSION}")
    yield
    logger.info("Shutting down application")


app = FastAPI(
    title=settings.APP_NAME,
    version=settings.APP_VERSION,
    description="Constrained MDP control of TCL ensembles coordinated with PV on a distribution feeder",
    lifespan=lifespan,
    docs_url="/docs",
    redoc_url="/redoc"
)

app.include_router(tcl_router)
app.include_router(mdp_router)
app.include_router(grid_router)


@app.get("/health")
async def health_check():
    return {
        "status": "healthy",
        "app_name": settings.APP_NAME,
        "version": settings.APP_VERSION,
        "timestamp": datetime.now(timezone.utc).isoformat()
    }


@app.get(f"{settings.API_V1_PREFIX}/status")
async def status():
    """Numerical defaults the endpoints run with."""
    return {
        "version": settings.APP_VERSION,
        "solver": {
            "tol": settings.SOLVER_TOL,
            "max_iter": settings.SOLVER_MAX_ITER,
            "regularization": settings.KKT_REGULARIZATION,
        },
        "power_flow": {"tol": settings.PF_TOL, "max_iter": settings.PF_MAX_ITER, "fd_step": settings.FD_STEP},
        "mpc": {"horizon": settings.MPC_HORIZON, "dt_seconds": settings.MPC_DT_SECONDS},
        "routers": ["tcl", "mdp", "grid"],
    }
