"""
Time-domain detection chain: bunched photon streams, TAC start-stop pairing,
MCA histogramming and the windowed g2 estimator.

Both detectors sit behind a 50/50 splitter and see the same thermal intensity
trace; the stop detector's excess fluctuation is scaled by the spatial factor
of the configured detector positions.
"""

import logging
import math
from typing import Optional, Tuple

import numpy as np
from scipy.optimize import curve_fit
from scipy.signal import lfilter
from tqdm import tqdm

from src.hbt import analytic
from src.hbt.apparatus import ApparatusConfig, validate
from src.hbt.exceptions import ConfigurationError, EstimationError, HistogramError
from src.hbt.rng import complex_normal, stream
from src.hbt.schemas import (
    CoincidenceHistogram,
    DetectorId,
    GaussianPeakFit,
    IntensityTrace,
    PhotonEventStream,
    TemporalLineshape,
)

logger = logging.getLogger(__name__)

# AR(1) links weaker than this are treated as fresh draws
LINK_FLOOR = 2.0**-60

# Expected thinning candidates (both detectors) per sampler block
BLOCK_CANDIDATES = 2_000_000

# Caps truncating more than this fraction of the exponential intensity law are flagged
CAP_TAIL_LIMIT = 1e-4

# Bin-index tolerance absorbing timestamp rounding, in units of one bin
BIN_TOLERANCE = 1e-5


def _require_lorentzian(config: ApparatusConfig):
    if config.temporal_lineshape != TemporalLineshape.LORENTZIAN:
        raise ConfigurationError(
            "event pipeline lineshape", "only the lorentzian (OU) process is simulated"
        )


def ou_amplitudes(
    times, tau0: float, rng: np.random.Generator, initial: Optional[complex] = None
) -> np.ndarray:
    """
    Complex Ornstein-Uhlenbeck amplitudes at sorted times.

    a(t_k) = rho_k * a(t_{k-1}) + sqrt(1 - rho_k^2) * w_k with rho_k = exp(-(t_k - t_{k-1})/tau0)
    and w_k circular complex normal, so <a(t) a*(t + tau)> = exp(-|tau|/tau0) and <|a|^2> = 1.

    Args:
        times: Non-decreasing sample times
        tau0: Correlation time of the amplitude
        rng: Random stream
        initial: Amplitude at times[0]; drawn from the stationary law if None

    Returns:
        Complex array of len(times)
    """
    times = np.asarray(times, dtype=float)
    n = times.size
    if n == 0:
        return np.empty(0, dtype=complex)
    a0 = complex_normal(rng, 1)[0] if initial is None else complex(initial)
    if n == 1:
        return np.array([a0])

    gaps = np.diff(times)
    if np.any(gaps < 0):
        raise ValueError("times must be sorted")
    noise = complex_normal(rng, n - 1)

    if np.allclose(gaps, gaps[0], rtol=1e-9, atol=0.0):
        rho = math.exp(-gaps[0] / tau0)
        gain = math.sqrt(1.0 - rho**2)
        tail = lfilter([gain], [1.0, -rho], noise, zi=np.array([rho * a0]))[0]
        return np.concatenate([[a0], tail])

    rho = np.exp(-gaps / tau0)
    gain = np.sqrt(1.0 - rho**2)
    linked = rho > LINK_FLOOR

    # Position of every sample inside its run of linked samples
    index = np.arange(n)
    is_start = np.concatenate([[True], ~linked])
    last_start = np.maximum.accumulate(np.where(is_start, index, 0))
    depth = index - last_start

    amplitudes = np.empty(n, dtype=complex)
    amplitudes[0] = a0
    amplitudes[1:] = gain * noise
    order = np.argsort(depth, kind="stable")
    bounds = np.searchsorted(depth[order], np.arange(depth.max() + 2))
    for level in range(1, depth.max() + 1):
        k = order[bounds[level] : bounds[level + 1]]
        amplitudes[k] = rho[k - 1] * amplitudes[k - 1] + gain[k - 1] * noise[k - 1]
    return amplitudes


def generate_intensity_trace(
    config: ApparatusConfig,
    duration: float,
    rng: np.random.Generator,
    step: Optional[float] = None,
) -> IntensityTrace:
    """
    Sample a unit-mean thermal intensity trace I(t) = |a(t)|^2.

    Args:
        config: Apparatus config (coherence_time, trace_step)
        duration: Span of the trace in seconds
        rng: Random stream
        step: Sampling step; defaults to config.trace_step

    Returns:
        IntensityTrace
    """
    _require_lorentzian(config)
    step = config.trace_step if step is None else step
    if not step > 0 or step > config.coherence_time / 10 * (1 + 1e-9):
        raise ConfigurationError("trace_step <= coherence_time/10", f"step {step:.3g} s")
    if not duration > 0:
        raise ValueError("duration must be positive")

    n = max(1, int(math.ceil(duration / step - 1e-9)))
    amplitudes = ou_amplitudes(np.arange(n) * step, config.coherence_time, rng)
    logger.debug(f"Generated intensity trace with {n} samples")
    return IntensityTrace(step=step, intensity=np.abs(amplitudes) ** 2)


def _finalize(
    detector_id: DetectorId, times: np.ndarray, duration: float
) -> PhotonEventStream:
    # Jittered events outside the acquisition span are lost
    times = np.unique(times[(times >= 0.0) & (times <= duration)])
    return PhotonEventStream(detector_id=detector_id, timestamps=times, duration=duration)


def thin_to_events(
    trace: IntensityTrace,
    mean_rate: float,
    detector_id: DetectorId,
    jitter: float,
    rng: np.random.Generator,
    jitter_rng: Optional[np.random.Generator] = None,
) -> PhotonEventStream:
    """
    Poisson detections with rate mean_rate * I(t), by thinning a homogeneous process.

    Args:
        trace: Intensity trace driving the detector
        mean_rate: Detection rate at unit intensity (counts/s)
        detector_id: D1 or D2
        jitter: Standard deviation of the Gaussian timing jitter (s)
        rng: Stream for candidate times and acceptance
        jitter_rng: Stream for the jitter; defaults to rng

    Returns:
        PhotonEventStream over [0, trace.duration]
    """
    duration = trace.duration
    peak = float(trace.intensity.max())
    if peak <= 0.0 or mean_rate <= 0.0:
        return PhotonEventStream(
            detector_id=detector_id, timestamps=np.empty(0), duration=duration
        )

    count = rng.poisson(mean_rate * peak * duration)
    candidates = np.sort(rng.uniform(0.0, duration, count))
    accept = rng.uniform(0.0, 1.0, count) * peak < trace.at(candidates)
    times = candidates[accept]
    if jitter > 0.0:
        times = times + (jitter_rng or rng).normal(0.0, jitter, times.size)
    logger.debug(f"{detector_id.value}: kept {times.size} of {count} candidates")
    return _finalize(detector_id, times, duration)


def expected_capped(n1: int, n2: int, cap: float, spatial: float) -> float:
    """
    Expected number of thinning candidates whose intensity exceeds the cap.

    I1 is exponential with unit mean, so P(I1 > cap) = exp(-cap); I2 = 1 + s*(I1 - 1)
    exceeds the cap when I1 > 1 + (cap - 1)/s.
    """
    tail2 = math.exp(-(1.0 + (cap - 1.0) / spatial)) if spatial > 0.0 else 0.0
    return n1 * math.exp(-cap) + n2 * tail2


def _block_edges(config: ApparatusConfig, duration: float) -> np.ndarray:
    rate = (config.mean_rate_d1 + config.mean_rate_d2) * config.intensity_cap
    length = BLOCK_CANDIDATES / rate
    count = max(1, int(math.ceil(duration / length)))
    return np.linspace(0.0, duration, count + 1)


def simulate_event_streams(
    config: ApparatusConfig,
    seed: int,
    duration: Optional[float] = None,
    jitter: Optional[float] = None,
    progress: bool = False,
) -> Tuple[PhotonEventStream, PhotonEventStream]:
    """
    Start and stop streams for a long acquisition.

    The shared OU amplitude is evaluated only at thinning candidates of both
    detectors, block by block, so no dense trace is held in memory. D1 sees
    I1 = |a|^2 and D2 sees I2 = 1 + s*(I1 - 1) with s the spatial factor of
    (event_x1, event_x2).

    Args:
        config: Apparatus config
        seed: Run seed
        duration: Acquisition span; defaults to config.acquisition_time
        jitter: Per-detector jitter sigma; defaults to config.jitter_sigma
        progress: Show a progress bar over blocks

    Returns:
        (start, stop) streams
    """
    validate(config)
    _require_lorentzian(config)
    duration = config.acquisition_time if duration is None else duration
    jitter = config.jitter_sigma if jitter is None else jitter
    cap = config.intensity_cap
    spatial = float(analytic.spatial_factor(config, config.event_x1, config.event_x2)[0])
    if math.exp(-cap) > CAP_TAIL_LIMIT:
        logger.warning(
            f"intensity_cap {cap} truncates a fraction {math.exp(-cap):.2g} of the intensity law"
        )
    logger.info(
        f"Simulating {duration:.3g} s of events: rates {config.mean_rate_d1:.3g}/"
        f"{config.mean_rate_d2:.3g} 1/s, spatial factor {spatial:.4f}"
    )

    edges = _block_edges(config, duration)
    detections = {DetectorId.D1: [], DetectorId.D2: []}
    anchor: Optional[Tuple[float, complex]] = None
    capped = 0
    drawn = {DetectorId.D1: 0, DetectorId.D2: 0}

    for b in tqdm(range(edges.size - 1), desc="event blocks", disable=not progress):
        lo, hi = edges[b], edges[b + 1]
        candidates = {}
        for detector, rate, name in (
            (DetectorId.D1, config.mean_rate_d1, "thinning_d1"),
            (DetectorId.D2, config.mean_rate_d2, "thinning_d2"),
        ):
            rng = stream(seed, name, b)
            count = rng.poisson(rate * cap * (hi - lo))
            times = np.sort(rng.uniform(lo, hi, count))
            candidates[detector] = (times, rng.uniform(0.0, cap, count))
            drawn[detector] += int(count)

        t1, u1 = candidates[DetectorId.D1]
        t2, u2 = candidates[DetectorId.D2]
        merged = np.concatenate([t1, t2])
        order = np.argsort(merged, kind="stable")
        trace_rng = stream(seed, "trace", b)
        if anchor is None:
            amplitudes = ou_amplitudes(merged[order], config.coherence_time, trace_rng)
        else:
            extended = np.concatenate([[anchor[0]], merged[order]])
            amplitudes = ou_amplitudes(
                extended, config.coherence_time, trace_rng, initial=anchor[1]
            )[1:]
        if amplitudes.size:
            anchor = (float(merged[order][-1]), complex(amplitudes[-1]))

        intensity = np.empty(merged.size)
        intensity[order] = np.abs(amplitudes) ** 2
        i1 = intensity[: t1.size]
        i2 = 1.0 + spatial * (intensity[t1.size :] - 1.0)
        capped += int(np.sum(i1 > cap) + np.sum(i2 > cap))

        for detector, times, u, level, name in (
            (DetectorId.D1, t1, u1, i1, "jitter_d1"),
            (DetectorId.D2, t2, u2, i2, "jitter_d2"),
        ):
            kept = times[u < level]
            if jitter > 0.0:
                kept = kept + stream(seed, name, b).normal(0.0, jitter, kept.size)
            detections[detector].append(kept)

    expected = expected_capped(drawn[DetectorId.D1], drawn[DetectorId.D2], cap, spatial)
    message = f"{capped} candidates exceeded intensity_cap {cap} (expected {expected:.1f})"
    if capped > expected + 5.0 * math.sqrt(expected) + 5.0:
        logger.warning(f"{message}; intensity law departs from exponential")
    else:
        logger.debug(message)

    start = _finalize(DetectorId.D1, np.concatenate(detections[DetectorId.D1]), duration)
    stop = _finalize(DetectorId.D2, np.concatenate(detections[DetectorId.D2]), duration)
    logger.info(f"Simulated {start.count} start and {stop.count} stop events")
    return start, stop


def _bin_count(bin_width: float, tau_min: float, tau_max: float) -> int:
    if not bin_width > 0 or not tau_min < tau_max:
        raise HistogramError("histogram needs bin_width > 0 and tau_min < tau_max")
    ratio = (tau_max - tau_min) / bin_width
    n = int(round(ratio))
    if n < 1 or abs(ratio - n) > 1e-6:
        raise HistogramError(
            f"range [{tau_min:.6g}, {tau_max:.6g}] is not a multiple of bin width {bin_width:.6g}"
        )
    return n


def _histogram(
    tau: np.ndarray, bin_width: float, tau_min: float, tau_max: float
) -> CoincidenceHistogram:
    n = _bin_count(bin_width, tau_min, tau_max)
    index = np.floor((tau - tau_min) / bin_width + BIN_TOLERANCE).astype(int)
    index = index[(index >= 0) & (index < n)]
    counts = np.bincount(index, minlength=n).astype(np.int64)
    return CoincidenceHistogram(
        bin_width=bin_width, tau_min=tau_min, tau_max=tau_max, counts=counts
    )


def tac_mca(
    start: PhotonEventStream,
    stop: PhotonEventStream,
    bin_width: float,
    tau_range: Tuple[float, float],
    dead_time: float = 0.0,
    stop_delay: float = 0.0,
) -> CoincidenceHistogram:
    """
    Histogram start-stop intervals as a single-armed, non-retriggerable TAC does.

    Each start arms the converter unless it is busy. The first delayed stop at or
    after the start completes the conversion if it arrives within the converter
    range (tau_max + stop_delay); the converter then stays busy until that stop
    plus dead_time. Without a stop in range the converter times out at the end of
    its range. Reported intervals are stop - start (the delay is subtracted).

    Args:
        start: D1 stream
        stop: D2 stream
        bin_width: MCA bin width (s)
        tau_range: (tau_min, tau_max) reported range
        dead_time: Busy time after a completed conversion
        stop_delay: Delay inserted in the stop channel

    Returns:
        CoincidenceHistogram
    """
    tau_min, tau_max = tau_range
    _bin_count(bin_width, tau_min, tau_max)
    if not math.isclose(start.duration, stop.duration, rel_tol=1e-12):
        raise HistogramError("start and stop streams cover different durations")
    if dead_time < 0 or stop_delay < 0:
        raise HistogramError("dead_time and stop_delay must be non-negative")

    t = start.timestamps
    delayed = stop.timestamps + stop_delay
    window = tau_max + stop_delay
    if t.size == 0:
        return _histogram(np.empty(0), bin_width, tau_min, tau_max)

    j = np.searchsorted(delayed, t, side="left")
    has_stop = j < delayed.size
    first = np.where(has_stop, delayed[np.minimum(j, delayed.size - 1)], np.inf)
    converted = first - t < window
    free = np.where(converted, first + dead_time, t + window)

    # A start is certainly accepted if every earlier start has freed the converter
    previous = np.concatenate([[-np.inf], np.maximum.accumulate(free)[:-1]])
    clean = t >= previous
    accepted = clean.copy()
    dirty = np.flatnonzero(~clean)
    if dirty.size:
        clean_free = np.maximum.accumulate(np.where(clean, free, -np.inf))
        busy = -np.inf
        for i in dirty:
            busy = max(busy, clean_free[i - 1])
            if t[i] >= busy:
                accepted[i] = True
                busy = free[i]
        logger.debug(f"TAC: resolved {dirty.size} starts near a busy converter")

    tau = first[accepted & converted] - stop_delay - t[accepted & converted]
    return _histogram(tau, bin_width, tau_min, tau_max)


def pair_histogram(
    start: PhotonEventStream,
    stop: PhotonEventStream,
    bin_width: float,
    tau_range: Tuple[float, float],
    nearest: bool = False,
) -> CoincidenceHistogram:
    """
    Direct interval histogram without converter logic.

    With nearest=False every (start, stop) pair with stop - start in range is
    counted; with nearest=True only the first stop at or after each start.
    """
    tau_min, tau_max = tau_range
    t = start.timestamps
    s = stop.timestamps
    if nearest:
        j = np.searchsorted(s, t, side="left")
        valid = j < s.size
        tau = s[j[valid]] - t[valid]
        return _histogram(tau, bin_width, tau_min, tau_max)

    lo = np.searchsorted(s, t + tau_min - bin_width, side="left")
    hi = np.searchsorted(s, t + tau_max + bin_width, side="left")
    per_start = hi - lo
    owner = np.repeat(np.arange(t.size), per_start)
    offset = np.arange(per_start.sum()) - np.repeat(np.cumsum(per_start) - per_start, per_start)
    tau = s[lo[owner] + offset] - t[owner]
    return _histogram(tau, bin_width, tau_min, tau_max)


def histogram_windows(
    hist: CoincidenceHistogram, config: ApparatusConfig
) -> Tuple[np.ndarray, np.ndarray]:
    """Masks of the near (|tau| <= near) and far (|tau| >= far) bins, selected by bin center."""
    centers = np.abs(hist.centers)
    tolerance = 1e-9 * hist.bin_width
    near = centers <= config.coincidence_window_near + tolerance
    far = centers >= config.coincidence_window_far - tolerance
    if not far.any():
        raise HistogramError("far window contains no bins")
    if not near.any():
        raise HistogramError("near window contains no bins")
    if far.sum() < 10:
        logger.warning(f"Far window has only {int(far.sum())} bins")
    return near, far


def g2_windowed_with_error(
    hist: CoincidenceHistogram, config: ApparatusConfig
) -> Tuple[float, float]:
    """Windowed g2 and its Poisson standard error."""
    near, far = histogram_windows(hist, config)
    near_counts = hist.counts[near]
    far_counts = hist.counts[far]
    if far_counts.sum() == 0:
        raise HistogramError("far window is empty")
    value = float(near_counts.mean() / far_counts.mean())
    if near_counts.sum() == 0:
        return value, float("nan")
    error = value * math.sqrt(1.0 / near_counts.sum() + 1.0 / far_counts.sum())
    return value, error


def g2_windowed(hist: CoincidenceHistogram, config: ApparatusConfig) -> float:
    """
    Ratio of mean counts per bin in the near window to the far window.

    Args:
        hist: Coincidence histogram
        config: Supplies coincidence_window_near and coincidence_window_far

    Returns:
        Windowed g2
    """
    return g2_windowed_with_error(hist, config)[0]


def predict_g2_windowed(config: ApparatusConfig) -> float:
    """Expected windowed g2 of the event pipeline for the configured binning."""
    n = _bin_count(config.histogram_bin_width, config.histogram_min, config.histogram_max)
    width = config.histogram_bin_width
    lower = config.histogram_min + np.arange(n) * width
    empty = CoincidenceHistogram(
        bin_width=width,
        tau_min=config.histogram_min,
        tau_max=config.histogram_max,
        counts=np.zeros(n, dtype=np.int64),
    )
    near_mask, far_mask = histogram_windows(empty, config)
    spatial = float(analytic.spatial_factor(config, config.event_x1, config.event_x2)[0])
    excess = np.array(
        [analytic.smeared_excess(config, lo, lo + width) / width for lo in lower]
    )
    return float(
        (1.0 + spatial * excess[near_mask].mean()) / (1.0 + spatial * excess[far_mask].mean())
    )


def _gaussian_with_baseline(tau, baseline, amplitude, center, sigma):
    return baseline + amplitude * np.exp(-0.5 * ((tau - center) / sigma) ** 2)


def fit_gaussian_peak(
    hist: CoincidenceHistogram, sigma_guess: float = 0.5e-9
) -> GaussianPeakFit:
    """
    Least-squares fit of baseline + Gaussian to a coincidence histogram.

    Bins are weighted by their Poisson errors.

    Raises:
        EstimationError: if the fit does not converge
    """
    tau = hist.centers
    counts = hist.counts.astype(float)
    edge = max(1, counts.size // 5)
    baseline = float(np.median(np.concatenate([counts[:edge], counts[-edge:]])))
    peak = int(np.argmax(counts))
    p0 = [baseline, max(counts[peak] - baseline, 1.0), tau[peak], sigma_guess]
    try:
        params, _ = curve_fit(
            _gaussian_with_baseline,
            tau,
            counts,
            p0=p0,
            sigma=np.sqrt(np.maximum(counts, 1.0)),
            maxfev=10000,
        )
    except (RuntimeError, ValueError) as e:
        raise EstimationError(f"Gaussian peak fit failed: {e}") from e
    baseline, amplitude, center, sigma = (float(p) for p in params)
    return GaussianPeakFit(
        baseline=baseline, amplitude=amplitude, center=center, sigma=abs(sigma)
    )


def acquire_histogram(
    config: ApparatusConfig,
    seed: int,
    duration: Optional[float] = None,
    jitter: Optional[float] = None,
    progress: bool = False,
) -> Tuple[CoincidenceHistogram, PhotonEventStream, PhotonEventStream]:
    """Simulate both streams and histogram them with the configured TAC and MCA."""
    start, stop = simulate_event_streams(config, seed, duration, jitter, progress)
    hist = tac_mca(
        start,
        stop,
        config.histogram_bin_width,
        (config.histogram_min, config.histogram_max),
        dead_time=config.tac_dead_time,
        stop_delay=config.stop_delay,
    )
    logger.info(f"Histogrammed {hist.total} conversions")
    return hist, start, stop


def window_stream(
    events: PhotonEventStream, begin: float, end: float
) -> PhotonEventStream:
    """Events in [begin, end), shifted to start at zero."""
    t = events.timestamps
    kept = t[(t >= begin) & (t < end)] - begin
    return PhotonEventStream(
        detector_id=events.detector_id, timestamps=kept, duration=end - begin
    )
