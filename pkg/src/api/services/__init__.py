"""
Service modules for business logic.
"""

from src.api.services.run_service import RunService

__all__ = ["RunService"]
