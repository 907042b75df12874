import numpy as np
import pytest
from fastapi.testclient import TestClient

from src.hbt.apparatus import ApparatusConfig, dump_config, with_updates


@pytest.fixture
def default_config():
    """Fixture to provide the default apparatus."""
    return ApparatusConfig()


@pytest.fixture
def point_config():
    """Default apparatus with point detectors."""
    return with_updates(ApparatusConfig(), aperture_points=1, detector_aperture=1e-9)


@pytest.fixture
def fast_event_config():
    """High singles rates so short acquisitions collect enough coincidences."""
    return with_updates(ApparatusConfig(), mean_rate_d1=1e7, mean_rate_d2=1e7)


@pytest.fixture
def rng():
    """Seeded generator for tests that draw their own samples."""
    return np.random.default_rng(20240101)


@pytest.fixture
def config_file(tmp_path, fast_event_config):
    """Apparatus file in the KEY=VALUE format read by load_config."""
    path = tmp_path / "apparatus.env"
    path.write_text(dump_config(fast_event_config))
    return path


@pytest.fixture
def test_client(tmp_path, monkeypatch):
    """Fixture to provide a FastAPI test client writing runs into a temporary directory."""
    from src.api.app import app
    from src.api.config import settings
    from src.api.services import run_service

    monkeypatch.setattr(settings, "OUT_DIR", str(tmp_path))
    monkeypatch.setattr(run_service, "runs_db", {})
    return TestClient(app)
