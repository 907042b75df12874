"""
Named experiments: scan grids, output files, summary metrics and the run manifest.

Metrics are computed from the CSV files after they are written, so the summary
always describes exactly what is on disk.
"""

import json
import logging
from datetime import datetime
from pathlib import Path
from typing import Callable, Dict, Optional

import numpy as np

from src.hbt import analytic
from src.hbt.apparatus import ApparatusConfig, config_hash, dump_config, validate
from src.hbt.correlation import (
    compare_to_oracle,
    estimate_g2,
    extract_peaks,
    flatness,
    peak_spacing,
    singles_spectrum,
)
from src.hbt.events import acquire_histogram, fit_gaussian_peak, g2_windowed_with_error, predict_g2_windowed
from src.hbt.exceptions import EstimationError
from src.hbt.io import read_histogram_csv, read_result_csv, write_events, write_histogram_csv, write_result_csv
from src.hbt.plotting import write_plot_files
from src.hbt.schemas import (
    CorrelationResult,
    Experiment,
    ResultMeta,
    RunManifest,
    ScanMode,
    ScanSpec,
)

logger = logging.getLogger(__name__)

Metrics = Dict[str, object]

# Every scan covers ±SCAN_HALF_WIDTH. The counter-scan steps at half the
# fixed-scan step, so its separations 2x land on the fixed-scan grid.
SCAN_HALF_WIDTH = 10e-3
FIXED_STEP = 0.25e-3
COUNTER_STEP = FIXED_STEP / 2

PLOT_KINDS = {
    Experiment.SINGLES_SCAN: "singles",
    Experiment.G2_FIXED: "fixed",
    Experiment.G2_COUNTER: "counter",
    Experiment.G2_COSCAN: "coscan",
}

# Singles profiles further than this from flat are reported as fringes
SINGLES_RATIO_LIMIT = 5.0


class RunOptions:
    """Knobs shared by every experiment of one run."""

    def __init__(
        self,
        seed: int,
        out_dir: Path,
        ensemble: int = 20000,
        batches: int = 20,
        workers: int = 1,
        duration: Optional[float] = None,
        progress: bool = False,
        write_event_files: bool = False,
    ):
        self.seed = seed
        self.out_dir = Path(out_dir)
        self.ensemble = ensemble
        self.batches = batches
        self.workers = workers
        self.duration = duration
        self.progress = progress
        self.write_event_files = write_event_files


def scan_grid(mode: ScanMode) -> np.ndarray:
    step = COUNTER_STEP if mode == ScanMode.COUNTER_SCAN else FIXED_STEP
    half = int(round(SCAN_HALF_WIDTH / step))
    return np.arange(-half, half + 1) * step


def scan_spec(mode: ScanMode, options: RunOptions) -> ScanSpec:
    """Default scan for a mode over ±10 mm."""
    grid = scan_grid(mode)
    return ScanSpec(
        mode=mode,
        positions=grid.tolist(),
        ensemble_size=options.ensemble,
        batches=options.batches,
    )


def _attach_meta(
    result: CorrelationResult, spec: ScanSpec, config: ApparatusConfig, seed: int
) -> CorrelationResult:
    meta = ResultMeta(spec=spec, config_hash=config_hash(config), seed=seed)
    return result.model_copy(update={"meta": meta})


def scan_metrics(
    path: Path, spec: ScanSpec, config: ApparatusConfig, seed: int, prefix: str
) -> Metrics:
    """Peak, visibility and oracle metrics recomputed from a scan CSV."""
    result = _attach_meta(read_result_csv(path), spec, config, seed)
    peaks = extract_peaks(result)
    spacing = peak_spacing(peaks)
    visibility = analytic.visibility(result.g2)
    report = compare_to_oracle(result, config)
    if not peaks:
        logger.warning(f"{prefix}: no peaks found")
    return {
        f"{prefix}.peak_positions_m": ",".join(f"{p.position:.6g}" for p in peaks),
        f"{prefix}.peak_spacing_m": spacing,
        f"{prefix}.g2max": float(np.max(result.g2)),
        f"{prefix}.visibility_michelson": visibility["michelson"],
        f"{prefix}.visibility_excess": visibility["excess"],
        f"{prefix}.chi2_per_dof": report.chi2_per_dof,
        f"{prefix}.max_sigma_deviation": report.max_sigma_deviation,
    }


class ExperimentRunner:
    """Runs experiments into one output directory and collects their metrics."""

    def __init__(self, config: ApparatusConfig, options: RunOptions):
        self.config = validate(config)
        self.options = options
        self.outputs: Dict[str, str] = {}
        self.metrics: Metrics = {}
        self.specs: Dict[Experiment, ScanSpec] = {}
        self._results: Dict[ScanMode, CorrelationResult] = {}
        self.options.out_dir.mkdir(parents=True, exist_ok=True)

    def _record(self, key: str, path: Path, kind: Optional[str] = None):
        self.outputs[key] = str(path)
        for extra in write_plot_files(path, kind=kind):
            self.outputs[f"{key}.{extra.suffix.lstrip('.')}"] = str(extra)

    def _scan(self, experiment: Experiment, mode: ScanMode) -> Path:
        spec = scan_spec(mode, self.options)
        # singles-scan and g2-fixed share one fixed-detector scan
        if mode not in self._results:
            self._results[mode] = estimate_g2(
                self.config,
                spec,
                self.options.seed,
                workers=self.options.workers,
                progress=self.options.progress,
            )
        result = self._results[mode]
        path = write_result_csv(result, self.options.out_dir / f"{experiment.value}.csv")
        self.specs[experiment] = spec
        self._record(experiment.value, path, PLOT_KINDS[experiment])
        return path

    def singles_scan(self):
        path = self._scan(Experiment.SINGLES_SCAN, ScanMode.FIXED_D1)
        spectrum = singles_spectrum(read_result_csv(path), self.config)
        self.metrics.update(
            {
                "singles_scan.fringe_frequency_per_m": spectrum["frequency"],
                "singles_scan.fringe_ratio": spectrum["ratio"],
                "singles_scan.flat": spectrum["ratio"] <= SINGLES_RATIO_LIMIT,
            }
        )

    def g2_fixed(self):
        path = self._scan(Experiment.G2_FIXED, ScanMode.FIXED_D1)
        self.metrics.update(
            scan_metrics(path, self.specs[Experiment.G2_FIXED], self.config, self.options.seed, "g2_fixed")
        )

    def g2_counter(self):
        path = self._scan(Experiment.G2_COUNTER, ScanMode.COUNTER_SCAN)
        self.metrics.update(
            scan_metrics(path, self.specs[Experiment.G2_COUNTER], self.config, self.options.seed, "g2_counter")
        )

    def g2_coscan(self):
        path = self._scan(Experiment.G2_COSCAN, ScanMode.CO_SCAN)
        result = read_result_csv(path)
        fraction = flatness(result)
        self.metrics.update(
            {
                "g2_coscan.mean_g2": float(np.mean(result.g2)),
                "g2_coscan.flat_fraction": fraction,
                "g2_coscan.flat": fraction >= 0.95,
            }
        )

    def coincidence_histogram(self):
        hist, start, stop = acquire_histogram(
            self.config,
            self.options.seed,
            duration=self.options.duration,
            progress=self.options.progress,
        )
        name = Experiment.COINCIDENCE_HISTOGRAM.value
        path = write_histogram_csv(hist, self.options.out_dir / f"{name}.csv")
        self._record(name, path)
        if self.options.write_event_files:
            for events in (start, stop):
                key = f"events_{events.detector_id.value.lower()}"
                self.outputs[key] = str(write_events(events, self.options.out_dir / f"{key}.txt"))

        stored = read_histogram_csv(path)
        value, error = g2_windowed_with_error(stored, self.config)
        self.metrics.update(
            {
                "coincidence_histogram.conversions": stored.total,
                "coincidence_histogram.g2_windowed": value,
                "coincidence_histogram.g2_windowed_stderr": error,
                "coincidence_histogram.g2_windowed_predicted": predict_g2_windowed(self.config),
                "coincidence_histogram.visibility_excess": value - 1.0,
                "coincidence_histogram.visibility_michelson": (value - 1.0) / (value + 1.0),
            }
        )
        try:
            fit = fit_gaussian_peak(stored)
        except EstimationError as e:
            logger.warning(f"Coincidence peak fit skipped: {e}")
            return
        self.metrics.update(
            {
                "coincidence_histogram.fit_center_s": fit.center,
                "coincidence_histogram.fit_sigma_s": fit.sigma,
                "coincidence_histogram.fit_sigma_predicted_s": analytic.coincidence_peak_sigma(self.config),
            }
        )

    def full_paper(self):
        for step in (self.singles_scan, self.g2_fixed, self.g2_counter, self.g2_coscan, self.coincidence_histogram):
            step()
        fixed = self.metrics.get("g2_fixed.peak_spacing_m")
        counter = self.metrics.get("g2_counter.peak_spacing_m")
        self.metrics["spacing_ratio"] = fixed / counter if fixed and counter else None

    def dispatch(self, experiment: Experiment) -> Callable[[], None]:
        return {
            Experiment.SINGLES_SCAN: self.singles_scan,
            Experiment.G2_FIXED: self.g2_fixed,
            Experiment.G2_COUNTER: self.g2_counter,
            Experiment.G2_COSCAN: self.g2_coscan,
            Experiment.COINCIDENCE_HISTOGRAM: self.coincidence_histogram,
            Experiment.FULL_PAPER: self.full_paper,
        }[experiment]


def format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return f"{value:.9g}"
    return str(value)


def write_summary(metrics: Metrics, path: Path) -> Path:
    """Flat key=value summary, one metric per line, sorted by key."""
    lines = [f"{key}={format_value(metrics[key])}" for key in sorted(metrics)]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_summary(path: Path) -> Dict[str, str]:
    values = {}
    for line in Path(path).read_text().splitlines():
        key, _, value = line.partition("=")
        values[key] = value
    return values


def run_experiment(
    experiment: Experiment, config: ApparatusConfig, options: RunOptions
) -> RunManifest:
    """
    Run one named experiment and write its outputs, summary.txt and manifest.json.

    Args:
        experiment: Experiment to run
        config: Apparatus config
        options: Seed, output directory and effort settings

    Returns:
        RunManifest; every path in outputs exists
    """
    started = datetime.now()
    logger.info(f"Running {experiment.value} with seed {options.seed} into {options.out_dir}")
    runner = ExperimentRunner(config, options)

    config_path = options.out_dir / "config.env"
    config_path.write_text(dump_config(runner.config))
    runner.outputs["config"] = str(config_path)

    runner.dispatch(experiment)()

    summary_path = write_summary(runner.metrics, options.out_dir / "summary.txt")
    runner.outputs["summary"] = str(summary_path)

    manifest = RunManifest(
        experiment=experiment,
        config_hash=config_hash(runner.config),
        seed=options.seed,
        started_at=started,
        finished_at=datetime.now(),
        outputs=runner.outputs,
        metrics=runner.metrics,
    )
    manifest_path = options.out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest.model_dump(mode="json"), indent=2))
    logger.info(f"Finished {experiment.value}; manifest at {manifest_path}")
    return manifest
