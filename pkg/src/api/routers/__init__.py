"""
API routers for handling different endpoints.
"""

from src.api.routers.analytic import router as analytic_router
from src.api.routers.runs import router as runs_router

__all__ = ["analytic_router", "runs_router"]
