from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from datetime import datetime
import logging

from src.api.config import settings
from src.api.middlewares.metrics import MetricsMiddleware
from src.api.routers import analytic, runs
from src.api.schemas.runs import ErrorResponse, HealthCheck
from src.api.services.run_service import RunService
from src.hbt.exceptions import HbtError

# Create logger
logging.basicConfig(level=settings.LOG_LEVEL)
logger = logging.getLogger(__name__)

# Create FastAPI app
app = FastAPI(
    title="Thermal HBT Simulator API",
    description="Two-photon interference of thermal light through a multi-slit grating",
    version="0.1.0",
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)
app.add_middleware(MetricsMiddleware)

app.include_router(analytic.router, tags=["analytic"])
app.include_router(runs.router, tags=["runs"])


@app.get("/", response_model=HealthCheck)
async def root():
    """Health check endpoint."""
    return HealthCheck(
        status="ok", runs=len(RunService().list_runs()), requests=MetricsMiddleware.total_requests()
    )


@app.exception_handler(HbtError)
async def hbt_exception_handler(request: Request, exc: HbtError):
    logger.error(f"Simulation error on {request.url.path}: {exc}")
    return JSONResponse(
        status_code=422,
        content=ErrorResponse(
            detail=str(exc),
            code=type(exc).__name__,
            timestamp=datetime.now().isoformat(),
        ).model_dump(),
    )
