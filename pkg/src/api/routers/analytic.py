from fastapi import APIRouter, HTTPException, Query

from src.api.schemas.runs import AnalyticG2Response, OrdersResponse
from src.hbt import analytic
from src.hbt.apparatus import ApparatusConfig

router = APIRouter(prefix="/analytic")


@router.get("/g2", response_model=AnalyticG2Response)
def g2(
    x1: float = Query(0.0, description="D1 position (m)"),
    x2: float = Query(..., description="D2 position (m)"),
    beta: float = Query(1.0, description="Visibility factor in [0, 1]"),
):
    """
    Point-detector g2 of the default apparatus.
    """
    config = ApparatusConfig()
    try:
        value = float(analytic.g2_analytic(config, x1, x2, beta))
    except ValueError as e:
        raise HTTPException(status_code=422, detail=str(e))
    return AnalyticG2Response(
        x1=x1, x2=x2, beta=beta, g2=value, law=analytic.fringe_law(config, beta)
    )


@router.get("/orders", response_model=OrdersResponse)
def orders(max_m: int = Query(2, ge=0, le=50, description="Largest order magnitude")):
    """
    Propagating diffraction orders of the default grating.
    """
    found = analytic.grating_orders(ApparatusConfig(), max_m)
    return OrdersResponse(orders=found, count=len(found))
