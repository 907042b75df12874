from typing import Dict, List, Optional
import logging
import threading
import uuid
from pathlib import Path

from src.api.config import settings
from src.api.schemas.runs import RunRequest, RunResponse
from src.hbt.apparatus import ApparatusConfig, load_config, with_updates
from src.hbt.experiments import RunOptions, run_experiment
from src.hbt.rng import fresh_seed

logger = logging.getLogger(__name__)

# In-memory run registry
runs_db: Dict[str, RunResponse] = {}
_lock = threading.Lock()


class RunService:
    """Runs experiments for the HTTP layer and keeps their manifests in memory."""

    def __init__(self, out_dir: Optional[str] = None):
        self.out_dir = Path(out_dir or settings.OUT_DIR) / "runs"

    def base_config(self) -> ApparatusConfig:
        if settings.CONFIG_PATH:
            return load_config(settings.CONFIG_PATH)
        return ApparatusConfig()

    def start_run(self, request: RunRequest) -> RunResponse:
        """
        Run an experiment to completion.

        Args:
            request: Experiment, seed, effort settings and config overrides

        Returns:
            RunResponse with the run id and manifest
        """
        config = with_updates(self.base_config(), **request.overrides)
        run_id = str(uuid.uuid4())
        seed = request.seed if request.seed is not None else fresh_seed()
        options = RunOptions(
            seed=seed,
            out_dir=self.out_dir / run_id,
            ensemble=request.ensemble or settings.ENSEMBLE,
            batches=request.batches or settings.BATCHES,
            workers=settings.WORKERS,
            duration=request.duration or settings.DURATION,
            progress=False,
        )
        logger.info(f"Starting run {run_id}: {request.experiment.value}, seed {seed}")
        manifest = run_experiment(request.experiment, config, options)

        response = RunResponse(run_id=run_id, manifest=manifest)
        with _lock:
            runs_db[run_id] = response
        return response

    def get_run(self, run_id: str) -> Optional[RunResponse]:
        return runs_db.get(run_id)

    def list_runs(self) -> List[str]:
        return sorted(runs_db)

    def read_file(self, run_id: str, name: str) -> Optional[str]:
        """
        Text of one output file of a run.

        Args:
            run_id: Run identifier
            name: Output key (e.g. "g2-fixed") or file name (e.g. "g2-fixed.csv")

        Returns:
            File content, or None if the run or file is unknown
        """
        run = self.get_run(run_id)
        if run is None:
            return None
        for key, path in run.manifest.outputs.items():
            if name == key or name == Path(path).name:
                return Path(path).read_text()
        return None
