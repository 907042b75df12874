from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field

from src.hbt.schemas import Experiment, FringeLaw, GratingOrder, RunManifest


class HealthCheck(BaseModel):
    """Service status."""

    status: str = Field(..., description="ok when the service is up")
    runs: int = Field(..., description="Number of completed runs held in memory")
    requests: int = Field(0, description="Requests served since start")


class RunRequest(BaseModel):
    """Request to run a named experiment."""

    experiment: Experiment = Field(..., description="Experiment to run")
    seed: Optional[int] = Field(None, ge=0, description="Run seed; generated if omitted")
    ensemble: Optional[int] = Field(None, ge=2, description="Field realizations per scan")
    batches: Optional[int] = Field(None, ge=2, description="Batches for error bars")
    duration: Optional[float] = Field(None, gt=0, description="Event acquisition span (s)")
    overrides: Dict[str, Any] = Field(
        default_factory=dict, description="ApparatusConfig fields to replace"
    )

    class Config:
        json_schema_extra = {
            "example": {
                "experiment": "g2-counter",
                "seed": 7,
                "ensemble": 2000,
                "overrides": {"detector_aperture": 0.001},
            }
        }


class RunResponse(BaseModel):
    """A stored run."""

    run_id: str = Field(..., description="Identifier of the run")
    manifest: RunManifest = Field(..., description="Manifest written by the run")


class RunList(BaseModel):
    runs: List[str] = Field(default_factory=list)
    count: int = 0


class AnalyticG2Response(BaseModel):
    """Point-detector fringe law evaluated at one detector pair."""

    x1: float
    x2: float
    beta: float
    g2: float
    law: FringeLaw


class OrdersResponse(BaseModel):
    orders: List[GratingOrder]
    count: int


class ErrorResponse(BaseModel):
    """Error payload."""

    detail: str
    code: str
    timestamp: str
