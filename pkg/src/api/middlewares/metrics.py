import time
from fastapi import Request
from starlette.middleware.base import BaseHTTPMiddleware
from starlette.types import ASGIApp
import logging

from src.api.config import settings

logger = logging.getLogger(__name__)

# POST /runs blocks for a whole simulation and is not flagged as slow
SLOW_REQUEST_SECONDS = 1.0


class MetricsMiddleware(BaseHTTPMiddleware):
    """
    Request counting and timing.
    """

    request_counts = {}

    def __init__(self, app: ASGIApp):
        super().__init__(app)
        self.response_times = {}
        logger.setLevel(settings.LOG_LEVEL)

    @classmethod
    def total_requests(cls) -> int:
        return sum(cls.request_counts.values())

    async def dispatch(self, request: Request, call_next):
        start_time = time.time()
        key = f"{request.method}:{request.url.path}"
        MetricsMiddleware.request_counts[key] = (
            MetricsMiddleware.request_counts.get(key, 0) + 1
        )

        try:
            response = await call_next(request)
        except Exception as e:
            process_time = time.time() - start_time
            logger.error(f"Request failed: {key} | Error: {e} | Time: {process_time:.4f}s")
            raise

        process_time = time.time() - start_time
        self.response_times.setdefault(key, []).append(process_time)
        response.headers["X-Process-Time"] = f"{process_time:.4f}"
        if process_time > SLOW_REQUEST_SECONDS and request.method != "POST":
            logger.warning(
                f"Slow request: {key} | Status: {response.status_code} | Time: {process_time:.4f}s"
            )
        else:
            logger.info(
                f"Request: {key} | Status: {response.status_code} | Time: {process_time:.4f}s"
            )
        return response
