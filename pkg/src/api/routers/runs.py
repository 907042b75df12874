from fastapi import APIRouter, HTTPException, Depends
from fastapi.responses import PlainTextResponse

from src.api.schemas.runs import RunList, RunRequest, RunResponse
from src.api.services.run_service import RunService

router = APIRouter()


@router.post("/runs", response_model=RunResponse)
def create_run(request: RunRequest, run_service: RunService = Depends()):
    """
    Run a named experiment and return its manifest.
    """
    return run_service.start_run(request)


@router.get("/runs", response_model=RunList)
def list_runs(run_service: RunService = Depends()):
    runs = run_service.list_runs()
    return RunList(runs=runs, count=len(runs))


@router.get("/runs/{run_id}", response_model=RunResponse)
def get_run(run_id: str, run_service: RunService = Depends()):
    """
    Retrieve a completed run by ID.
    """
    run = run_service.get_run(run_id)
    if run is None:
        raise HTTPException(status_code=404, detail=f"Run with ID {run_id} not found")
    return run


@router.get("/runs/{run_id}/files/{name}", response_class=PlainTextResponse)
def get_run_file(run_id: str, name: str, run_service: RunService = Depends()):
    """
    Retrieve one output file (CSV, summary, gnuplot script) of a run.
    """
    content = run_service.read_file(run_id, name)
    if content is None:
        raise HTTPException(
            status_code=404, detail=f"File {name} not found for run {run_id}"
        )
    return content
