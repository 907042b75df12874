"""
CSV and text formats for results, histograms and event streams.
"""

import logging
from pathlib import Path
from typing import Union

import numpy as np
import pandas as pd

from src.hbt.exceptions import MalformedCsvError
from src.hbt.schemas import CoincidenceHistogram, CorrelationResult, DetectorId, PhotonEventStream

logger = logging.getLogger(__name__)

RESULT_COLUMNS = ["position_m", "g2", "stderr", "singles_d1", "singles_d2"]
HISTOGRAM_COLUMNS = ["tau_s", "count"]
FLOAT_FORMAT = "%.9g"


PathLike = Union[str, Path]


def result_frame(result: CorrelationResult) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "position_m": result.positions,
            "g2": result.g2,
            "stderr": result.stderr,
            "singles_d1": result.singles_d1,
            "singles_d2": result.singles_d2,
        },
        columns=RESULT_COLUMNS,
    )


def write_result_csv(result: CorrelationResult, path: PathLike) -> Path:
    """Write a g2 scan as position_m,g2,stderr,singles_d1,singles_d2."""
    path = Path(path)
    result_frame(result).to_csv(path, index=False, float_format=FLOAT_FORMAT)
    logger.info(f"Wrote {len(result.positions)} scan points to {path}")
    return path


def write_histogram_csv(hist: CoincidenceHistogram, path: PathLike) -> Path:
    """Write a histogram as tau_s,count with bin centers in seconds."""
    path = Path(path)
    frame = pd.DataFrame({"tau_s": hist.centers, "count": hist.counts})
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    logger.info(f"Wrote {hist.counts.size} histogram bins to {path}")
    return path


def write_events(events: PhotonEventStream, path: PathLike) -> Path:
    """One timestamp per line, 12 significant digits."""
    path = Path(path)
    np.savetxt(path, events.timestamps, fmt="%.12g")
    logger.info(f"Wrote {events.count} {events.detector_id.value} events to {path}")
    return path


def read_events(path: PathLike, detector_id: DetectorId, duration: float) -> PhotonEventStream:
    """Read a file written by write_events back into a stream."""
    timestamps = np.atleast_1d(np.loadtxt(path, dtype=float, ndmin=1))
    return PhotonEventStream(
        detector_id=detector_id, timestamps=timestamps, duration=duration
    )


def read_csv(path: PathLike) -> pd.DataFrame:
    """
    Read a result or histogram CSV and check its layout.

    Raises:
        MalformedCsvError: if the file is empty, has unknown columns or non-numeric values
    """
    try:
        frame = pd.read_csv(path)
    except pd.errors.EmptyDataError as e:
        raise MalformedCsvError(f"{path} is empty") from e
    except pd.errors.ParserError as e:
        raise MalformedCsvError(f"{path} could not be parsed: {e}") from e

    columns = list(frame.columns)
    if columns not in (RESULT_COLUMNS, HISTOGRAM_COLUMNS):
        raise MalformedCsvError(f"{path} has unexpected columns {columns}")
    if frame.empty:
        raise MalformedCsvError(f"{path} has no rows")
    try:
        frame = frame.astype(float)
    except ValueError as e:
        raise MalformedCsvError(f"{path} has non-numeric values") from e
    if not np.all(np.isfinite(frame.to_numpy())):
        raise MalformedCsvError(f"{path} has non-finite values")
    return frame


def is_histogram(frame: pd.DataFrame) -> bool:
    return list(frame.columns) == HISTOGRAM_COLUMNS


def read_result_csv(path: PathLike) -> CorrelationResult:
    """Read a scan CSV back into a CorrelationResult (without metadata)."""
    frame = read_csv(path)
    if is_histogram(frame):
        raise MalformedCsvError(f"{path} is a histogram, not a scan result")
    return CorrelationResult(
        positions=frame["position_m"].tolist(),
        g2=frame["g2"].tolist(),
        stderr=frame["stderr"].tolist(),
        singles_d1=frame["singles_d1"].tolist(),
        singles_d2=frame["singles_d2"].tolist(),
    )


def read_histogram_csv(path: PathLike) -> CoincidenceHistogram:
    """Rebuild a histogram from its bin centers (uniform bins assumed)."""
    frame = read_csv(path)
    if not is_histogram(frame):
        raise MalformedCsvError(f"{path} is a scan result, not a histogram")
    centers = frame["tau_s"].to_numpy()
    if centers.size < 2:
        raise MalformedCsvError(f"{path} needs at least two bins")
    width = float(np.mean(np.diff(centers)))
    return CoincidenceHistogram(
        bin_width=width,
        tau_min=float(centers[0] - width / 2),
        tau_max=float(centers[-1] + width / 2),
        counts=frame["count"].to_numpy().astype(np.int64),
    )
