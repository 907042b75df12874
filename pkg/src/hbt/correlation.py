"""
Monte-Carlo estimation of g2(x1, x2) over detector scans, with batch-means
error bars and comparison against the closed-form laws.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.fft import rfft, rfftfreq
from scipy.signal import find_peaks
from tqdm import tqdm

from src.hbt import analytic
from src.hbt.apparatus import ApparatusConfig, config_hash, slit_mask, validate
from src.hbt.exceptions import EstimationError
from src.hbt.field_mc import (
    aperture_intensity,
    aperture_nodes,
    emitter_positions,
    propagation_kernel,
    sample_field,
)
from src.hbt.rng import stream
from src.hbt.schemas import (
    CorrelationResult,
    OracleReport,
    Peak,
    ResultMeta,
    ScanMode,
    ScanSpec,
)

logger = logging.getLogger(__name__)


class _BatchSums:
    """Per-position accumulators of one realization batch."""

    def __init__(self, s1: np.ndarray, s2: np.ndarray, s12: np.ndarray, count: int):
        self.s1 = s1
        self.s2 = s2
        self.s12 = s12
        self.count = count

    @property
    def g2(self) -> np.ndarray:
        n = self.count
        return (self.s12 / n) / ((self.s1 / n) * (self.s2 / n))


class PairEstimator:
    """
    Ratio-of-means g2 estimator for a fixed list of detector pairs.

    Every pair draws its own realizations from the field stream keyed by
    (batch, pair index), as a sequential scan acquires each position over a
    separate time window. Noise is therefore independent across scan
    positions, and the singles profiles carry no common realization. Both
    detectors of a pair see the same realization, evaluated at the union of
    their aperture nodes; swapping x1 and x2 gives bit-identical results.
    """

    def __init__(self, config: ApparatusConfig, x1, x2):
        self.config = validate(config)
        self.x1 = np.atleast_1d(np.asarray(x1, dtype=float))
        self.x2 = np.atleast_1d(np.asarray(x2, dtype=float))
        if self.x1.shape != self.x2.shape:
            raise EstimationError("x1 and x2 must have the same length")

        self.mask = slit_mask(config)
        self.positions = emitter_positions(
            self.mask, config.emitter_density, config.groove_width
        )
        offsets = aperture_nodes(config, 0.0)
        self.kernels = []
        self.index1 = []
        self.index2 = []
        for a, b in zip(self.x1, self.x2):
            nodes, inverse = np.unique(
                np.concatenate([a + offsets, b + offsets]), return_inverse=True
            )
            self.kernels.append(propagation_kernel(self.positions, config, nodes))
            self.index1.append(inverse[: offsets.size])
            self.index2.append(inverse[offsets.size :])
        logger.debug(
            f"Estimator over {self.x1.size} pairs, {offsets.size} nodes per aperture, "
            f"{self.positions.size} emitters"
        )

    def pair_intensities(
        self, seed: int, batch: int, pair: int, start: int, size: int
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Per-realization aperture intensities (I1, I2) of one pair, normalized to mean 1."""
        field = sample_field(
            self.mask,
            self.config.emitter_density,
            stream(seed, "field", batch, pair),
            config=self.config,
            size=size,
            seed_tag=start,
        )
        values = field.amplitudes @ self.kernels[pair] / np.sqrt(self.positions.size)
        return (
            aperture_intensity(values[:, self.index1[pair]]),
            aperture_intensity(values[:, self.index2[pair]]),
        )

    def run_batch(self, seed: int, batch: int, start: int, size: int) -> _BatchSums:
        """Accumulate one batch of realizations, pair by pair."""
        n = self.x1.size
        s1, s2, s12 = np.empty(n), np.empty(n), np.empty(n)
        for pair in range(n):
            i1, i2 = self.pair_intensities(seed, batch, pair, start, size)
            s1[pair], s2[pair], s12[pair] = i1.sum(), i2.sum(), (i1 * i2).sum()
        return _BatchSums(s1, s2, s12, size)


def estimate_g2_pairs(
    config: ApparatusConfig,
    x1,
    x2,
    ensemble_size: int,
    seed: int,
    batches: int = 20,
    workers: int = 1,
    progress: bool = False,
) -> Dict[str, np.ndarray]:
    """
    Estimate g2 = <I1*I2>/(<I1><I2>) for arbitrary detector pairs.

    Args:
        config: Apparatus config
        x1, x2: Detector centers, same length
        ensemble_size: Number of field realizations
        seed: Run seed
        batches: Number of batches for the batch-means error bars
        workers: Threads evaluating batches concurrently
        progress: Show a progress bar

    Returns:
        Dictionary with g2, stderr, singles_d1, singles_d2 arrays
    """
    if batches < 2:
        raise EstimationError("at least two batches are required")
    if ensemble_size < batches:
        raise EstimationError(f"ensemble_size {ensemble_size} < batches {batches}")

    estimator = PairEstimator(config, x1, x2)
    sizes = [len(chunk) for chunk in np.array_split(np.arange(ensemble_size), batches)]
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])

    def work(b: int) -> _BatchSums:
        return estimator.run_batch(seed, b, int(starts[b]), sizes[b])

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = list(
            tqdm(
                pool.map(work, range(batches)),
                total=batches,
                desc="realization batches",
                disable=not progress,
            )
        )

    # Fixed-order reduction over the batch axis
    s1 = np.sum([r.s1 for r in results], axis=0)
    s2 = np.sum([r.s2 for r in results], axis=0)
    s12 = np.sum([r.s12 for r in results], axis=0)
    pooled = _BatchSums(s1, s2, s12, ensemble_size)

    batch_g2 = np.array([r.g2 for r in results])
    stderr = batch_g2.std(axis=0, ddof=1) / np.sqrt(batches)

    return {
        "g2": pooled.g2,
        "stderr": stderr,
        "singles_d1": s1 / ensemble_size,
        "singles_d2": s2 / ensemble_size,
    }


def estimate_g2(
    config: ApparatusConfig,
    spec: ScanSpec,
    seed: int,
    workers: int = 1,
    progress: bool = False,
) -> CorrelationResult:
    """
    Run one detector scan.

    Args:
        config: Apparatus config
        spec: Scan geometry, positions and ensemble size
        seed: Run seed; identical (config, spec, seed) give identical output
        workers: Threads evaluating batches concurrently
        progress: Show a progress bar

    Returns:
        CorrelationResult
    """
    x1, x2 = spec.detector_pairs()
    logger.info(
        f"Estimating g2 for {spec.mode.value} scan: {len(spec.positions)} positions, "
        f"ensemble {spec.ensemble_size}, seed {seed}"
    )
    estimate = estimate_g2_pairs(
        config,
        x1,
        x2,
        spec.ensemble_size,
        seed,
        batches=spec.batches,
        workers=workers,
        progress=progress,
    )
    return CorrelationResult(
        positions=list(spec.positions),
        g2=estimate["g2"].tolist(),
        stderr=estimate["stderr"].tolist(),
        singles_d1=estimate["singles_d1"].tolist(),
        singles_d2=estimate["singles_d2"].tolist(),
        meta=ResultMeta(spec=spec, config_hash=config_hash(config), seed=seed),
    )


def smooth(values) -> np.ndarray:
    """Three-point moving average with edge values repeated."""
    padded = np.pad(np.asarray(values, dtype=float), 1, mode="edge")
    return np.convolve(padded, np.ones(3) / 3.0, mode="valid")


def _parabolic_vertex(x: np.ndarray, y: np.ndarray, i: int) -> Tuple[float, float]:
    x0, x1, x2 = x[i - 1], x[i], x[i + 1]
    y0, y1, y2 = y[i - 1], y[i], y[i + 1]
    denom = (x0 - x1) * (x0 - x2) * (x1 - x2)
    a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom
    b = (x2**2 * (y0 - y1) + x1**2 * (y2 - y0) + x0**2 * (y1 - y2)) / denom
    if a >= 0.0:
        return float(x1), float(y1)
    vertex = -b / (2 * a)
    # Vertex of a parabola through a local maximum stays between the outer points
    vertex = min(max(vertex, x0), x2)
    height = y1 + a * (vertex - x1) ** 2 + (2 * a * x1 + b) * (vertex - x1)
    return float(vertex), float(height)


def extract_peaks(
    result: CorrelationResult, rel_prominence: float = 0.1
) -> List[Peak]:
    """
    Local maxima of the smoothed g2 curve.

    The curve is smoothed by a 3-point moving average; maxima must stand out by
    max(2 x median stderr, rel_prominence x peak-to-peak of the smoothed curve).
    Positions are refined by the parabola through the three smoothed points.

    Args:
        result: Estimated or analytic curve
        rel_prominence: Relative prominence floor

    Returns:
        Peaks sorted by position; empty if none qualify
    """
    x = np.asarray(result.positions, dtype=float)
    if x.size < 3:
        return []
    smoothed = smooth(result.g2)
    threshold = max(
        2.0 * float(np.median(result.stderr)),
        rel_prominence * float(np.ptp(smoothed)),
    )
    indices, _ = find_peaks(smoothed, prominence=threshold)
    peaks = []
    for i in indices:
        position, height = _parabolic_vertex(x, smoothed, int(i))
        peaks.append(Peak(position=position, height=height))
    if not peaks:
        logger.debug("No peaks above the prominence threshold")
    return sorted(peaks, key=lambda p: p.position)


def peak_spacing(peaks: List[Peak]) -> Optional[float]:
    """Distance from the zero-order peak to its nearest neighbours (mean of both sides)."""
    if len(peaks) < 2:
        return None
    positions = np.array([p.position for p in peaks])
    zero = int(np.argmin(np.abs(positions)))
    gaps = []
    if zero > 0:
        gaps.append(positions[zero] - positions[zero - 1])
    if zero < positions.size - 1:
        gaps.append(positions[zero + 1] - positions[zero])
    return float(np.mean(gaps))


def oracle_curve(
    result: CorrelationResult,
    config: ApparatusConfig,
    oracle: str = "finite_aperture",
    beta_temporal: float = 1.0,
) -> np.ndarray:
    """Closed-form g2 on the result's detector pairs."""
    if result.meta is None:
        raise EstimationError("result has no scan metadata")
    x1, x2 = result.meta.spec.detector_pairs()
    if x1.size != len(result.g2):
        raise EstimationError("result grid does not match its scan spec")
    if oracle == "finite_aperture":
        return analytic.g2_finite_aperture(config, x1, x2, beta_temporal)
    if oracle == "scaled_point":
        beta = beta_temporal * analytic.beta_spatial(config)
        return analytic.g2_analytic(config, x1, x2, beta)
    raise ValueError(f"Unknown oracle: {oracle}")


def compare_to_oracle(
    result: CorrelationResult,
    config: ApparatusConfig,
    counterpart: Optional[CorrelationResult] = None,
    oracle: str = "finite_aperture",
) -> OracleReport:
    """
    Chi-square agreement of a Monte-Carlo curve with the closed-form law.

    Args:
        result: Curve from estimate_g2
        config: Apparatus config used for the run
        counterpart: Optional second scan; with one fixed-detector and one
            counter-scan result the peak spacing ratio is reported
        oracle: "finite_aperture" (aperture-averaged law) or "scaled_point"
            (point law times beta_spatial)

    Returns:
        OracleReport
    """
    expected = oracle_curve(result, config, oracle)
    g2 = np.asarray(result.g2)
    stderr = np.asarray(result.stderr)
    residual = g2 - expected
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(stderr > 0, residual / stderr, np.where(residual == 0, 0.0, np.inf))

    ratio = None
    if counterpart is not None:
        ratio = peak_spacing_ratio(result, counterpart)

    return OracleReport(
        chi2_per_dof=float(np.sum(z**2) / z.size),
        max_sigma_deviation=float(np.max(np.abs(z))),
        fraction_within_3sigma=float(np.mean(np.abs(z) <= 3.0)),
        peak_spacing_ratio=ratio,
    )


def peak_spacing_ratio(
    first: CorrelationResult, second: CorrelationResult
) -> Optional[float]:
    """(fixed-detector spacing) / (counter-scan spacing) for one scan of each kind."""
    by_mode = {first.mode: first, second.mode: second}
    if set(by_mode) != {ScanMode.FIXED_D1, ScanMode.COUNTER_SCAN}:
        raise EstimationError("spacing ratio needs one fixed_d1 and one counter_scan result")
    fixed = peak_spacing(extract_peaks(by_mode[ScanMode.FIXED_D1]))
    counter = peak_spacing(extract_peaks(by_mode[ScanMode.COUNTER_SCAN]))
    if fixed is None or counter is None:
        logger.warning("Peak spacing undefined: fewer than two peaks in a scan")
        return None
    return fixed / counter


def flatness(result: CorrelationResult, n_sigma: float = 3.0) -> float:
    """Fraction of points within n_sigma standard errors of the curve mean."""
    g2 = np.asarray(result.g2)
    stderr = np.asarray(result.stderr)
    return float(np.mean(np.abs(g2 - g2.mean()) <= n_sigma * stderr))


def singles_spectrum(result: CorrelationResult, config: ApparatusConfig) -> Dict[str, float]:
    """
    Fourier amplitude of the D2 singles profile at the grating frequency d/(lambda*z).

    Returns:
        Dictionary with frequency, amplitude at the nearest bin, median noise
        floor of the remaining non-DC bins, and their ratio
    """
    x = np.asarray(result.positions, dtype=float)
    step = float(np.mean(np.diff(x)))
    profile = np.asarray(result.singles_d2) - np.mean(result.singles_d2)
    amplitude = np.abs(rfft(profile))
    freqs = rfftfreq(x.size, step)
    target = 1.0 / config.fringe_period
    k = int(np.argmin(np.abs(freqs[1:] - target))) + 1
    others = np.delete(amplitude[1:], k - 1)
    floor = float(np.median(others)) if others.size else 0.0
    return {
        "frequency": float(freqs[k]),
        "amplitude": float(amplitude[k]),
        "noise_floor": floor,
        "ratio": float(amplitude[k] / floor) if floor > 0 else float("inf"),
    }
